//! Frozen accountant references.
#![allow(clippy::excessive_precision)]

/// `(q, z, α, RDP ε(α))` from `oracles/rdp_oracle.py` (60-digit mpmath).
pub const RDP_REFERENCE: [(f64, f64, f64, f64); 50] = [
    (0.001, 0.8, 12.0, 1.8393043985290866183),
    (0.001, 1.1, 5.0, 0.0000032307647098863679324),
    (0.001, 1.1, 12.0, 0.0000078573167832664972019),
    (0.001, 1.1, 16.0, 0.000011398758247646277152),
    (0.001, 2.0, 8.0, 0.0000011382237177147440606),
    (0.001, 2.0, 12.0, 0.0000017094673578883137225),
    (0.001, 2.0, 64.0, 0.98274463596303861829),
    (0.001, 5.0, 12.0, 0.00000024496588155187113309),
    (0.001, 5.0, 64.0, 0.0000013093021994366716604),
    (0.0033333333333333335, 0.01, 2.0, 9988.592435050687598),
    (0.0033333333333333335, 0.3, 2.0, 0.55585950441185378282),
    (0.0033333333333333335, 0.3, 8.0, 37.925835901980214719),
    (0.0033333333333333335, 0.3, 64.0, 349.76123685114290691),
    (0.0033333333333333335, 0.5, 16.0, 25.915965360366718923),
    (0.0033333333333333335, 0.8, 256.0, 194.27384975093338252),
    (0.0033333333333333335, 1.1, 12.0, 0.000091741487752989460739),
    (0.0033333333333333335, 2.0, 8.0, 0.00001270217625581596496),
    (0.0033333333333333335, 5.0, 8.0, 0.0000018153088252410073073),
    (0.01, 0.01, 2.0, 9990.7896596280238173),
    (0.01, 0.5, 128.0, 251.35856863144507327),
    (0.01, 1.1, 32.0, 8.469416433675927746),
    (0.01, 2.0, 256.0, 27.376770323086465136),
    (0.01, 5.0, 16.0, 0.000032837112252630203346),
    (0.01, 5.0, 64.0, 0.00013402647473733524679),
    (0.05, 0.3, 8.0, 41.020750417525597595),
    (0.05, 2.0, 256.0, 28.992519756745797277),
    (0.1, 0.01, 32.0, 159997.62313796852228),
    (0.1, 0.5, 3.0, 2.5535812800204852162),
    (0.1, 5.0, 2.0, 0.00040802448860948442786),
    (0.25, 0.3, 64.0, 354.14725652203693651),
    (0.25, 0.3, 256.0, 1420.8304914126273516),
    (0.25, 0.8, 256.0, 198.60826919040512942),
    (0.25, 1.1, 2.0, 0.077260961074299057827),
    (0.25, 1.1, 12.0, 3.4467261777486686998),
    (0.25, 2.0, 8.0, 0.10770969505360200736),
    (0.5, 2.0, 4.0, 0.15736820319402478435),
    (0.9, 0.01, 128.0, 639999.89380987398266),
    (0.9, 0.3, 5.0, 27.646077133205494901),
    (0.9, 0.5, 5.0, 9.8682993710576233541),
    (0.9, 0.5, 128.0, 255.89380987398266326),
    (0.9, 0.8, 3.0, 2.1931532259461993832),
    (0.9, 0.8, 32.0, 24.891240758030630915),
    (0.9, 1.1, 3.0, 1.1140777203085902801),
    (0.9, 1.1, 32.0, 13.114381253899256534),
    (0.9, 2.0, 4.0, 0.42917964634760860153),
    (0.9, 2.0, 12.0, 1.3928693695813753002),
    (1.0, 0.5, 8.0, 16.0),
    (1.0, 0.5, 32.0, 64.0),
    (1.0, 1.0, 2.0, 1.0),
    (1.0, 1.1, 16.0, 6.6115702479338842975),
];

/// Brute-force minimum of `rounds·α/(2z²) + ln(1/δ)/(α-1)` over a grid.
pub fn grid_min(z: f64, rounds: u64, delta: f64, grid: &[f64]) -> (f64, f64) {
    grid.iter()
        .map(|&a| (rounds as f64 * a / (2.0 * z * z) + (1.0 / delta).ln() / (a - 1.0), a))
        .fold((f64::INFINITY, 0.0), |best, cur| if cur.0 < best.0 { cur } else { best })
}
