use ctrecon::dataset::write_png;
use ctrecon::fbp::FbpLayer;
use ctrecon::geometry::{make_geometry, radon_forward, AngleSpec, Image};
use ctrecon::phantom::shepp_logan;
fn main() {
    let m = 128usize;
    let reference = shepp_logan(m).unwrap().masked();
    for n in [60usize, 90] {
        let g = make_geometry(m, AngleSpec::Uniform(n)).unwrap();
        let layer = FbpLayer::new(g.clone()).unwrap();
        let sino = radon_forward(&reference, &g).unwrap();
        let recon = layer.forward(&sino).unwrap();
        let diff = Image { size: m, pixels: recon.pixels.iter().zip(&reference.pixels)
            .map(|(&r, &f)| ((r - f).abs() * 5.0).min(255.0)).collect() };
        write_png(std::path::Path::new(&format!("/tmp/diff{n}.png")), &diff).unwrap();
        write_png(std::path::Path::new(&format!("/tmp/recon{n}.png")), &recon).unwrap();
    }
}
