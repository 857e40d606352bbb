//! Sheward-style control charts rendered as SVG.
//!
//! Points are plotted in input order. Each point carries its own center and
//! limits, so per-cluster limits for varying offsets (one UPL per patient,
//! say) draw as step lines and equal offsets as straight ones.

use std::fmt::Write as _;

use crate::error::{invalid, Result};
use crate::format::{dec2, expected_exceedance, sig6};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Band {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChartPoint {
    pub id: String,
    pub y: u64,
    pub n: f64,
    pub center: f64,
    /// One band per chart level, in the order of [`ChartSpec::levels`].
    pub bands: Vec<Band>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum PointClass {
    Within,
    /// Strictly above the upper limit of the given level (index into levels).
    Above(usize),
    /// Strictly below the lower limit of the given level.
    Below(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChartSpec {
    pub title: String,
    /// Coverage levels in increasing order, e.g. `[0.95, 0.99]`.
    pub levels: Vec<f64>,
    pub points: Vec<ChartPoint>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Exceedance {
    pub level: f64,
    pub above: usize,
    pub below: usize,
    pub expected: f64,
    /// False when no point has a finite lower limit at this level.
    pub has_lower: bool,
}

impl Exceedance {
    pub fn summary(&self) -> String {
        let mut s = format!("{}%: {} above", percent(self.level), self.above);
        if self.has_lower {
            s += &format!(", {} below", self.below);
        }
        s + &format!(" (expected outside: {})", dec2(self.expected))
    }
}

fn percent(level: f64) -> String {
    let p = level * 100.0;
    if (p - p.round()).abs() < 1e-9 {
        format!("{}", p.round() as i64)
    } else {
        format!("{p}")
    }
}

impl PointClass {
    pub fn label(self, levels: &[f64]) -> String {
        match self {
            PointClass::Within => "within".into(),
            PointClass::Above(i) => format!("above-{}", percent(levels[i])),
            PointClass::Below(i) => format!("below-{}", percent(levels[i])),
        }
    }

    fn color(self, levels: usize) -> &'static str {
        let outer = |i: usize| i + 1 == levels && levels > 1;
        match self {
            PointClass::Within => "#808080",
            PointClass::Above(i) if outer(i) => "#b2182b",
            PointClass::Above(_) => "#ef8a62",
            PointClass::Below(i) if outer(i) => "#2166ac",
            PointClass::Below(_) => "#67a9cf",
        }
    }
}

impl ChartPoint {
    /// The widest band the point falls outside of, if any.
    pub fn classify(&self) -> PointClass {
        let y = self.y as f64;
        for (i, b) in self.bands.iter().enumerate().rev() {
            if y > b.upper {
                return PointClass::Above(i);
            }
            if y < b.lower {
                return PointClass::Below(i);
            }
        }
        PointClass::Within
    }
}

impl ChartSpec {
    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(invalid("nothing to chart: no data points"));
        }
        if self.levels.is_empty() || self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("chart levels must be given in increasing order"));
        }
        if self.points.iter().any(|p| p.bands.len() != self.levels.len()) {
            return Err(invalid("every point needs one band per level"));
        }
        Ok(())
    }

    /// Counts outside each level's band. Points beyond a wider band also
    /// count as outside every narrower one.
    pub fn exceedances(&self) -> Vec<Exceedance> {
        let h = self.points.len();
        self.levels
            .iter()
            .enumerate()
            .map(|(i, &level)| {
                let y = |p: &ChartPoint| p.y as f64;
                Exceedance {
                    level,
                    above: self.points.iter().filter(|p| y(p) > p.bands[i].upper).count(),
                    below: self.points.iter().filter(|p| y(p) < p.bands[i].lower).count(),
                    expected: expected_exceedance(h, 1.0 - level),
                    has_lower: self.points.iter().any(|p| p.bands[i].lower.is_finite()),
                }
            })
            .collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        self.validate()?;
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["cluster_id".to_string(), "y".into(), "n".into(), "center".into()];
        for &l in &self.levels {
            header.push(format!("lower_{}", percent(l)));
            header.push(format!("upper_{}", percent(l)));
        }
        header.push("class".into());
        w.write_record(&header).map_err(csv_err)?;
        for p in &self.points {
            let mut row = vec![p.id.clone(), p.y.to_string(), sig6(p.n), sig6(p.center)];
            for b in &p.bands {
                row.push(sig6(b.lower));
                row.push(sig6(b.upper));
            }
            row.push(p.classify().label(&self.levels));
            w.write_record(&row).map_err(csv_err)?;
        }
        String::from_utf8(w.into_inner().map_err(|e| invalid(e.to_string()))?).map_err(|e| invalid(e.to_string()))
    }

    pub fn to_svg(&self) -> Result<String> {
        self.validate()?;
        Ok(render(self))
    }
}

fn csv_err(e: csv::Error) -> crate::error::CliError {
    invalid(e.to_string())
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 60.0;
const BOTTOM: f64 = 50.0;

/// Tick step of the form {1, 2, 5} x 10^k giving at most about `target` ticks.
fn tick_step(span: f64, target: f64) -> f64 {
    let raw = span / target;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0].into_iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag)
}

fn render(spec: &ChartSpec) -> String {
    let pts = &spec.points;
    let finite = |v: f64| v.is_finite().then_some(v);
    let values = pts.iter().flat_map(|p| {
        std::iter::once(p.y as f64)
            .chain(p.bands.iter().flat_map(|b| [finite(b.lower), finite(b.upper)].into_iter().flatten()))
    });
    let (mut lo, mut hi) = values.fold((0f64, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi <= lo {
        hi = lo + 1.0;
    }
    let pad = 0.05 * (hi - lo);
    hi += pad;
    if lo < 0.0 {
        lo -= pad;
    }

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let slot = plot_w / pts.len() as f64;
    let x = |i: f64| LEFT + slot * (i + 0.5);
    let y = |v: f64| TOP + plot_h * (hi - v.clamp(lo, hi)) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{LEFT}" y="22" font-size="15">{}</text>"#, escape(&spec.title));

    let note: Vec<String> = spec.exceedances().iter().map(Exceedance::summary).collect();
    let _ = writeln!(s, r##"<text x="{LEFT}" y="42" fill="#404040">{}</text>"##, escape(&note.join("; ")));

    // Axes and horizontal grid.
    let step = tick_step(hi - lo, 6.0);
    let mut t = (lo / step).ceil() * step;
    while t <= hi + 1e-9 * step {
        let ty = y(t);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT:.2}" y1="{ty:.2}" x2="{:.2}" y2="{ty:.2}" stroke="#e5e5e5"/>"##,
            WIDTH - RIGHT
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, ty + 4.0, trim_tick(t));
        t += step;
    }
    let _ = writeln!(
        s,
        r#"<path d="M{LEFT:.2} {TOP:.2}V{:.2}H{:.2}" fill="none" stroke="black"/>"#,
        TOP + plot_h,
        WIDTH - RIGHT
    );
    let every = (pts.len() as f64 / 12.0).ceil().max(1.0) as usize;
    for i in (0..pts.len()).step_by(every) {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            x(i as f64),
            TOP + plot_h + 16.0,
            i + 1
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">Cluster</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(18 {:.2}) rotate(-90)" text-anchor="middle">Count</text>"#,
        TOP + plot_h / 2.0
    );

    // Step lines: one horizontal segment per point, joined vertically.
    let step_path = |value: &dyn Fn(&ChartPoint) -> f64| -> Option<String> {
        let mut d = String::new();
        let mut open = false;
        for (i, p) in pts.iter().enumerate() {
            let v = value(p);
            if !v.is_finite() {
                open = false;
                continue;
            }
            let (x0, x1, vy) = (LEFT + slot * i as f64, LEFT + slot * (i as f64 + 1.0), y(v));
            if open {
                let _ = write!(d, "V{vy:.2}H{x1:.2}");
            } else {
                let _ = write!(d, "M{x0:.2} {vy:.2}H{x1:.2}");
                open = true;
            }
        }
        (!d.is_empty()).then_some(d)
    };
    if let Some(d) = step_path(&|p| p.center) {
        let _ = writeln!(s, r#"<path d="{d}" fill="none" stroke="black" stroke-dasharray="6 4"/>"#);
    }
    for li in 0..spec.levels.len() {
        let style = line_style(li, spec.levels.len());
        for d in [step_path(&|p| p.bands[li].lower), step_path(&|p| p.bands[li].upper)].into_iter().flatten() {
            let _ = writeln!(s, r#"<path d="{d}" fill="none" {style}/>"#);
        }
    }

    for (i, p) in pts.iter().enumerate() {
        let class = p.classify();
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{}"><title>{}: {} ({})</title></circle>"#,
            x(i as f64),
            y(p.y as f64),
            class.color(spec.levels.len()),
            escape(&p.id),
            p.y,
            class.label(&spec.levels)
        );
    }

    // Legend.
    let mut lx = WIDTH - RIGHT - 10.0;
    for (li, &level) in spec.levels.iter().enumerate().rev() {
        let style = line_style(li, spec.levels.len());
        let label = format!("{}% limits", percent(level));
        let _ = writeln!(s, r#"<text x="{lx:.2}" y="22" text-anchor="end">{label}</text>"#);
        lx -= 7.0 * label.len() as f64 + 4.0;
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="18" x2="{lx:.2}" y2="18" {style}/>"#, lx - 24.0);
        lx -= 36.0;
    }
    s.push_str("</svg>\n");
    s
}

/// Solid black for the inner levels, dashed grey for the outermost.
fn line_style(level: usize, levels: usize) -> &'static str {
    if levels > 1 && level + 1 == levels {
        r##"stroke="#808080" stroke-dasharray="3 3""##
    } else {
        r#"stroke="black""#
    }
}

fn trim_tick(t: f64) -> String {
    let v = if t.abs() < 1e-9 { 0.0 } else { t };
    let s = format!("{v:.6}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}
