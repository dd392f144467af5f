//! Configs shipped with the binary.

/// `(name, description, json)`.
pub const PRESETS: &[(&str, &str, &str)] = &[
    (
        "bohmian_hist",
        "n=1 real-axis Bohmian ensemble vs Born density",
        include_str!("../presets/bohmian_hist.json"),
    ),
    (
        "pointset_a_small",
        "n=1 real-axis crossings, 10^4 trajectories",
        include_str!("../presets/pointset_a_small.json"),
    ),
    (
        "pointset_a",
        "n=1 real-axis crossings, 10^5 trajectories",
        include_str!("../presets/pointset_a.json"),
    ),
    (
        "pointset_b_n1",
        "n=1 real parts of all samples",
        include_str!("../presets/pointset_b_n1.json"),
    ),
    (
        "pointset_b_n20",
        "n=20 real parts vs classical density",
        include_str!("../presets/pointset_b_n20.json"),
    ),
    (
        "fp1d",
        "n=1 real-axis Fokker-Planck from the Born density",
        include_str!("../presets/fp1d.json"),
    ),
    (
        "fp2d_n1",
        "n=1 complex-plane Fokker-Planck with point-set-B cross-check",
        include_str!("../presets/fp2d_n1.json"),
    ),
    (
        "fp2d_n3",
        "n=3 complex-plane Fokker-Planck",
        include_str!("../presets/fp2d_n3.json"),
    ),
    (
        "duffing",
        "Duffing oscillator from a Gaussian to stationarity",
        include_str!("../presets/duffing.json"),
    ),
    (
        "psi_magnitude",
        "|Psi_1(z)|^2 over [-3, 3]^2",
        include_str!("../presets/psi_magnitude.json"),
    ),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|p| p.0 == name).map(|p| p.2)
}
