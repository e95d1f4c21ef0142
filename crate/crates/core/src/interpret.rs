//! Centered per-predictor effect curves and their CSV/SVG export.
//!
//! For predictor `j` the curve is
//!
//! ```text
//! f_j(x) = Σ_k α_{j,k} b_{j,k}(x) − Σ_k α_{j,k} ∫₀¹ b_{j,k}
//! ```
//!
//! over the retained bases, so `∫₀¹ f_j = 0`. The subtracted constants are
//! absorbed by the intercept; predictions are unchanged.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::design::{Dataset, PredictorSupport};
use crate::error::{Error, Result};
use crate::fit::FittedModel;
use crate::quadrature;

/// Number of points in [`default_grid`].
pub const DEFAULT_GRID_POINTS: usize = 200;

/// A sampled effect curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveTable {
    pub predictor_name: String,
    pub grid_x: Vec<f64>,
    pub partial_effect: Vec<f64>,
    pub centering_constant: f64,
    pub empirical_support: PredictorSupport,
}

/// `n` equally spaced points from 0 to 1 inclusive.
pub fn default_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

fn check_spline_model(model: &FittedModel, j: usize) -> Result<()> {
    if !model.spec.spline_enabled {
        return Err(Error::Unsupported(
            "effect curves need a spline model; the linear baseline has none".into(),
        ));
    }
    if j >= model.spec.n_predictors() {
        return Err(Error::invalid(format!(
            "predictor index {j} out of range for {} predictors",
            model.spec.n_predictors()
        )));
    }
    Ok(())
}

/// Uncentered spline contribution `Σ_k α_k b_k(x)` of predictor `j`.
fn raw_effect(model: &FittedModel, j: usize, x: f64) -> f64 {
    let basis = &model.spec.bases[j];
    let dropped = model.spec.dropped_index[j];
    let alpha = &model.alpha[j];
    let (first, vals) = basis.eval_nonzero(x);
    vals.iter()
        .enumerate()
        .filter_map(|(r, v)| {
            let k = first + r;
            match k.cmp(&dropped) {
                std::cmp::Ordering::Less => Some(alpha[k] * v),
                std::cmp::Ordering::Equal => None,
                std::cmp::Ordering::Greater => Some(alpha[k - 1] * v),
            }
        })
        .sum()
}

/// `Σ_k α_{j,k} ∫₀¹ b_{j,k}` over the retained bases.
pub fn centering_constant(model: &FittedModel, j: usize) -> Result<f64> {
    check_spline_model(model, j)?;
    let ints = model.spec.bases[j].integrals();
    let dropped = model.spec.dropped_index[j];
    Ok(ints
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != dropped)
        .zip(&model.alpha[j])
        .map(|((_, i), a)| a * i)
        .sum())
}

/// Centered effect of predictor `j` at a single `x`.
pub fn effect_at(model: &FittedModel, j: usize, x: f64) -> Result<f64> {
    let c = centering_constant(model, j)?;
    Ok(raw_effect(model, j, x) - c)
}

/// Sample the centered effect curve of predictor `j` on `grid_x`.
pub fn entrywise_function(model: &FittedModel, j: usize, grid_x: &[f64]) -> Result<CurveTable> {
    check_spline_model(model, j)?;
    if grid_x.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("curve grid must be strictly increasing"));
    }
    if let Some(&x) = grid_x.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::Domain {
            what: "curve grid".into(),
            value: x,
        });
    }
    let c = centering_constant(model, j)?;
    Ok(CurveTable {
        predictor_name: model.spec.predictor_names[j].clone(),
        grid_x: grid_x.to_vec(),
        partial_effect: grid_x.iter().map(|&x| raw_effect(model, j, x) - c).collect(),
        centering_constant: c,
        empirical_support: model.spec.support[j],
    })
}

/// Curves for every predictor on the default grid.
pub fn all_curves(model: &FittedModel) -> Result<Vec<CurveTable>> {
    let grid = default_grid(DEFAULT_GRID_POINTS);
    (0..model.spec.n_predictors())
        .map(|j| entrywise_function(model, j, &grid))
        .collect()
}

/// `∫₀¹ f_j` by Gauss–Legendre quadrature on the knot spans. Zero up to
/// rounding for every fitted model.
pub fn curve_integral(model: &FittedModel, j: usize) -> Result<f64> {
    let c = centering_constant(model, j)?;
    let basis = &model.spec.bases[j];
    let nodes = basis.order().div_ceil(2).max(1);
    Ok(quadrature::composite(&basis.breakpoints(), nodes, |x| raw_effect(model, j, x) - c))
}

/// Intercept after absorbing every curve's centering constant.
pub fn centered_intercept(model: &FittedModel) -> Result<f64> {
    let mut nu = model.nu;
    for j in 0..model.spec.n_predictors() {
        nu += centering_constant(model, j)?;
    }
    Ok(nu)
}

/// Linear predictor rebuilt from the centered decomposition
/// `ν' + γᵀz + Σ_j f_j(p_j)`.
pub fn centered_linear_predictor(model: &FittedModel, data: &Dataset) -> Result<Vec<f64>> {
    model.spec.check_compatible(data)?;
    let nu = centered_intercept(model)?;
    let consts: Vec<f64> = (0..model.spec.n_predictors())
        .map(|j| centering_constant(model, j))
        .collect::<Result<_>>()?;
    let scales = &model.spec.standardization.columns;
    Ok((0..data.n_rows())
        .map(|i| {
            let mut eta = nu;
            for (c, g) in model.gamma.iter().enumerate() {
                eta += g * scales[c].apply(data.covariates[(i, c)]);
            }
            for (j, cj) in consts.iter().enumerate() {
                eta += raw_effect(model, j, data.predictors[(i, j)]) - cj;
            }
            eta
        })
        .collect())
}

/// Output formats for [`export_curves`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportFormats {
    pub csv: bool,
    pub svg: bool,
}

impl Default for ExportFormats {
    fn default() -> Self {
        ExportFormats { csv: true, svg: false }
    }
}

/// Curve as CSV text with header `x,partial_effect`. Floats use the
/// shortest representation that parses back to the same value.
pub fn curve_csv(table: &CurveTable) -> String {
    let mut out = String::from("x,partial_effect\n");
    for (x, y) in table.grid_x.iter().zip(&table.partial_effect) {
        let _ = writeln!(out, "{x},{y}");
    }
    out
}

/// Parse a curve CSV back into `(x, partial_effect)` columns.
pub fn parse_curve_csv(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["x", "partial_effect"] {
        return Err(Error::Load(format!("unexpected curve header {headers:?}")));
    }
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |k: usize| {
            rec[k]
                .parse::<f64>()
                .map_err(|_| Error::Load(format!("row {}, column {k}: not a number", i + 1)))
        };
        xs.push(parse(0)?);
        ys.push(parse(1)?);
    }
    Ok((xs, ys))
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Static SVG line plot of a curve, with the training interquartile range
/// shaded and the observed min/max marked.
pub fn curve_svg(table: &CurveTable) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const L: f64 = 70.0;
    const R: f64 = 20.0;
    const T: f64 = 40.0;
    const B: f64 = 60.0;
    let pw = W - L - R;
    let ph = H - T - B;

    let (mut lo, mut hi) = table
        .partial_effect
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !lo.is_finite() || !hi.is_finite() {
        lo = -1.0;
        hi = 1.0;
    }
    lo = lo.min(0.0);
    hi = hi.max(0.0);
    if hi - lo < 1e-12 {
        lo -= 1.0;
        hi += 1.0;
    }
    let pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
    let sx = |x: f64| L + x * pw;
    let sy = |y: f64| T + (hi - y) / (hi - lo) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
    let sup = &table.empirical_support;
    let _ = writeln!(
        s,
        r##"<rect x="{:.3}" y="{T:.3}" width="{:.3}" height="{ph:.3}" fill="#e8e8e8"/>"##,
        sx(sup.q1),
        sx(sup.q3) - sx(sup.q1)
    );
    for v in [sup.min, sup.max] {
        let _ = writeln!(
            s,
            r##"<line x1="{0:.3}" y1="{T:.3}" x2="{0:.3}" y2="{1:.3}" stroke="#999999" stroke-dasharray="4,3"/>"##,
            sx(v),
            T + ph
        );
    }
    let _ = writeln!(
        s,
        r##"<line x1="{L:.3}" y1="{0:.3}" x2="{1:.3}" y2="{0:.3}" stroke="#bbbbbb" stroke-dasharray="2,2"/>"##,
        sy(0.0),
        L + pw
    );
    let _ = writeln!(
        s,
        r#"<rect x="{L:.3}" y="{T:.3}" width="{pw:.3}" height="{ph:.3}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let x = i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<line x1="{0:.3}" y1="{1:.3}" x2="{0:.3}" y2="{2:.3}" stroke="black"/><text x="{0:.3}" y="{3:.3}" font-size="12" text-anchor="middle">{x:.2}</text>"#,
            sx(x),
            T + ph,
            T + ph + 5.0,
            T + ph + 20.0
        );
        let y = lo + (hi - lo) * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<line x1="{0:.3}" y1="{1:.3}" x2="{L:.3}" y2="{1:.3}" stroke="black"/><text x="{2:.3}" y="{3:.3}" font-size="12" text-anchor="end">{y:.3}</text>"#,
            L - 5.0,
            sy(y),
            L - 8.0,
            sy(y) + 4.0
        );
    }
    let points: Vec<String> = table
        .grid_x
        .iter()
        .zip(&table.partial_effect)
        .map(|(&x, &y)| format!("{:.3},{:.3}", sx(x), sy(y)))
        .collect();
    let _ = writeln!(
        s,
        r##"<polyline fill="none" stroke="#1f4e99" stroke-width="2" points="{}"/>"##,
        points.join(" ")
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.3}" y="24" font-size="15" text-anchor="middle">{}</text>"#,
        L + pw / 2.0,
        xml_escape(&table.predictor_name)
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.3}" y="{:.3}" font-size="13" text-anchor="middle">Predictive Value</text>"#,
        L + pw / 2.0,
        H - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{0:.3}" font-size="13" text-anchor="middle" transform="rotate(-90 18 {0:.3})">Partial Effect</text>"#,
        T + ph / 2.0
    );
    s.push_str("</svg>\n");
    s
}

/// File stem for a predictor: ASCII alphanumerics, `-` and `_` kept, other
/// characters replaced by `_`, prefixed with the predictor index.
pub fn file_stem(j: usize, name: &str) -> String {
    let clean: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{j:03}_{clean}")
}

/// Write one CSV (and optionally one SVG) per predictor into `dir`.
/// Returns the written paths in predictor order.
pub fn export_curves(model: &FittedModel, dir: &Path, formats: ExportFormats) -> Result<Vec<PathBuf>> {
    let curves = all_curves(model)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for (j, table) in curves.iter().enumerate() {
        let stem = file_stem(j, &table.predictor_name);
        if formats.csv {
            let p = dir.join(format!("{stem}.csv"));
            crate::data_io::write_atomic(&p, curve_csv(table).as_bytes())?;
            written.push(p);
        }
        if formats.svg {
            let p = dir.join(format!("{stem}.svg"));
            crate::data_io::write_atomic(&p, curve_svg(table).as_bytes())?;
            written.push(p);
        }
    }
    Ok(written)
}
