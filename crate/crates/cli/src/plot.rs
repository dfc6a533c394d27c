//! 2-D t-SNE scatter of an embedding dump, written as SVG.

use std::fmt::Write as _;

use disentaforge::eval::{EmbeddingDump, EmbeddingKind};
use disentaforge::seed;
use disentaforge::synth::Label;
use rand_distr::{Distribution, Normal};

pub const PLOT_STREAM: &str = "plot.tsne";

#[derive(Debug, Clone, PartialEq)]
pub struct TsneOptions {
    pub perplexity: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TsneOptions {
    fn default() -> Self {
        Self { perplexity: 30.0, epochs: 1000, seed: 0 }
    }
}

/// Exact t-SNE of every row, started from a seeded Gaussian cloud.
/// Returns one `[x, y]` per row.
pub fn project(dump: &EmbeddingDump, opts: &TsneOptions) -> Vec<[f64; 2]> {
    let n = dump.rows.len();
    if n == 0 {
        return Vec::new();
    }
    let samples: Vec<&[f64]> = dump.rows.iter().map(|r| r.vector.as_slice()).collect();
    let mut rng = seed::rng(opts.seed, PLOT_STREAM, 0);
    let normal = Normal::new(0.0, 1e-4).expect("valid normal");
    let init: Vec<f64> = (0..n * 2).map(|_| normal.sample(&mut rng)).collect();
    // Perplexity has to stay below the sample count.
    let perplexity = opts.perplexity.min(((n - 1) as f64 / 3.0).max(1.0));
    let flat = bhtsne::tSNE::<f64, &[f64], 2>::new(&samples)
        .perplexity(perplexity)
        .epochs(opts.epochs)
        .initial_embedding(init)
        .exact(|a, b| a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
        .embedding();
    flat.chunks(2).map(|p| [p[0], p[1]]).collect()
}

fn kind_color(kind: EmbeddingKind) -> &'static str {
    match kind {
        EmbeddingKind::IdPure1 => "#1f77b4",
        EmbeddingKind::IdPure2 => "#17becf",
        EmbeddingKind::ArtPure1 => "#d62728",
        EmbeddingKind::ArtPure2 => "#ff7f0e",
        EmbeddingKind::IdRaw1 => "#2ca02c",
        EmbeddingKind::IdRaw2 => "#9467bd",
    }
}

/// Scatter plot: colour by feature kind, circles for real samples, squares for fakes.
pub fn render_svg(dump: &EmbeddingDump, points: &[[f64; 2]], title: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 560.0;
    const PAD: f64 = 40.0;
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    let sx = if x1 > x0 { (W - 2.0 * PAD) / (x1 - x0) } else { 1.0 };
    let sy = if y1 > y0 { (H - 2.0 * PAD - 40.0) / (y1 - y0) } else { 1.0 };

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{PAD}" y="24" font-family="sans-serif" font-size="14">{}</text>"#, escape(title));
    for (r, p) in dump.rows.iter().zip(points) {
        let x = PAD + (p[0] - x0) * sx;
        let y = PAD + 20.0 + (p[1] - y0) * sy;
        let c = kind_color(r.kind);
        match r.label {
            Label::Real => {
                let _ = writeln!(svg, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{c}" fill-opacity="0.75"/>"#);
            }
            Label::Fake => {
                let _ = writeln!(
                    svg,
                    r#"<rect x="{:.2}" y="{:.2}" width="6" height="6" fill="{c}" fill-opacity="0.75"/>"#,
                    x - 3.0,
                    y - 3.0
                );
            }
        }
    }
    let mut kinds: Vec<EmbeddingKind> = dump.rows.iter().map(|r| r.kind).collect();
    kinds.sort();
    kinds.dedup();
    for (i, k) in kinds.iter().enumerate() {
        let x = PAD + i as f64 * 95.0;
        let y = H - 14.0;
        let _ = writeln!(svg, r#"<circle cx="{x}" cy="{}" r="4" fill="{}"/>"#, y - 4.0, kind_color(*k));
        let _ = writeln!(svg, r#"<text x="{}" y="{y}" font-family="sans-serif" font-size="11">{k}</text>"#, x + 8.0);
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
