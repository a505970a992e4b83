//! Log-log "rainbow" plot of the tracked eigenvalues. Each segment is coloured
//! by mixing the parameters' colours in proportion to their participation.

use std::fmt::Write as _;

use twig_core::twig::TwigSweep;

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

const PALETTE: [[u8; 3]; 10] = [
    [220, 30, 30],
    [30, 90, 220],
    [30, 170, 60],
    [240, 160, 0],
    [150, 50, 200],
    [0, 180, 190],
    [230, 90, 170],
    [120, 80, 30],
    [110, 110, 110],
    [170, 200, 30],
];

fn color(i: usize) -> [f64; 3] {
    let c = PALETTE[i % PALETTE.len()];
    [c[0] as f64, c[1] as f64, c[2] as f64]
}

fn blend(weights: impl Iterator<Item = f64>) -> String {
    let mut rgb = [0.0; 3];
    let mut total = 0.0;
    for (i, w) in weights.enumerate() {
        let c = color(i);
        for ch in 0..3 {
            rgb[ch] += w * c[ch];
        }
        total += w;
    }
    let total = if total > 0.0 { total } else { 1.0 };
    format!(
        "#{:02x}{:02x}{:02x}",
        (rgb[0] / total).round() as u8,
        (rgb[1] / total).round() as u8,
        (rgb[2] / total).round() as u8
    )
}

pub fn rainbow_svg(sweep: &TwigSweep, title: &str) -> String {
    let t = sweep.completed_horizons();
    let series: Vec<Vec<f64>> = (0..sweep.n_directions())
        .map(|k| {
            sweep
                .tracked_eigenvalues(k)
                .iter()
                .map(|v| v.max(f64::MIN_POSITIVE).log10())
                .collect()
        })
        .collect();
    let lx: Vec<f64> = t.iter().map(|v| v.log10()).collect();
    let (x0, x1) = match (lx.first(), lx.last()) {
        (Some(&a), Some(&b)) if b > a => (a.floor(), b.ceil()),
        (Some(&a), _) => (a.floor() - 1.0, a.ceil() + 1.0),
        _ => (0.0, 1.0),
    };
    let ys = series.iter().flatten().copied().filter(|v| v.is_finite());
    let (ymin, ymax) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    let (y0, y1) = if ymin.is_finite() && ymax > ymin {
        (ymin.floor(), ymax.ceil())
    } else if ymin.is_finite() {
        (ymin.floor() - 1.0, ymin.ceil() + 1.0)
    } else {
        (0.0, 1.0)
    };
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(
        s,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="18" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        escape(title)
    )
    .unwrap();

    // axes with one tick per decade
    writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    let ystep = ((y1 - y0) / 10.0).ceil().max(1.0);
    let mut d = x0;
    while d <= x1 + 1e-9 {
        let x = px(d);
        writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/>"#,
            TOP + ph,
            TOP + ph + 5.0
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{x:.2}" y="{}" text-anchor="middle">1e{d}</text>"#,
            TOP + ph + 18.0
        )
        .unwrap();
        d += 1.0;
    }
    let mut d = y0;
    while d <= y1 + 1e-9 {
        let y = py(d);
        writeln!(
            s,
            r#"<line x1="{}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#,
            LEFT - 5.0
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="end">1e{d}</text>"#,
            LEFT - 8.0,
            y + 4.0
        )
        .unwrap();
        d += ystep;
    }
    writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">t_max</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 10.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">FIM eigenvalue</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    )
    .unwrap();

    for (k, ys) in series.iter().enumerate() {
        writeln!(
            s,
            r#"<g class="direction" data-index="{k}" stroke-width="2.5" stroke-linecap="round">"#
        )
        .unwrap();
        for w in 0..ys.len().saturating_sub(1) {
            let (a, b) = (sweep.tracking[w][k], sweep.tracking[w + 1][k]);
            let pa = sweep.spectra[w].participation.column(a);
            let pb = sweep.spectra[w + 1].participation.column(b);
            let c = blend(pa.iter().zip(pb.iter()).map(|(u, v)| 0.5 * (u + v)));
            writeln!(
                s,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{c}"/>"#,
                px(lx[w]),
                py(ys[w]),
                px(lx[w + 1]),
                py(ys[w + 1])
            )
            .unwrap();
        }
        writeln!(s, "</g>").unwrap();
    }

    let lx0 = WIDTH - RIGHT + 20.0;
    for (i, name) in sweep.param_names.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let c = color(i);
        writeln!(
            s,
            r#"<rect x="{lx0}" y="{:.2}" width="14" height="10" fill="rgb({},{},{})"/><text x="{}" y="{:.2}">{}</text>"#,
            y - 9.0,
            c[0],
            c[1],
            c[2],
            lx0 + 20.0,
            y,
            escape(name)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
