use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{FamilyOverlaps, ModeFamily};
use crate::error::{Error, Result};

/// Uniform grid start + i·step, i = 0..len.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl Grid {
    pub fn new(start: f64, step: f64, len: usize) -> Result<Self> {
        if !(start.is_finite() && step.is_finite() && step > 0.0) {
            return Err(Error::Domain(format!(
                "bad grid start {start} / step {step}"
            )));
        }
        if len < 2 {
            return Err(Error::Domain(format!(
                "grid needs at least two points, got {len}"
            )));
        }
        Ok(Grid { start, step, len })
    }

    /// Points (i − M)·step with M = ⌈half_width/step⌉.
    pub fn symmetric(half_width: f64, step: f64) -> Result<Self> {
        let m = (half_width / step).ceil();
        if !(m.is_finite() && m >= 1.0) {
            return Err(Error::Domain(format!(
                "bad symmetric grid {half_width} / {step}"
            )));
        }
        let m = m as usize;
        Grid::new(-(m as f64) * step, step, 2 * m + 1)
    }

    pub fn point(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn end(&self) -> f64 {
        self.point(self.len - 1)
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(|i| self.point(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    #[default]
    Trapezoid,
    Simpson,
}

impl Rule {
    pub fn weights(&self, grid: &Grid) -> Result<Vec<f64>> {
        let n = grid.len;
        let h = grid.step;
        let mut w = vec![h; n];
        match self {
            Rule::Trapezoid => {
                w[0] = 0.5 * h;
                w[n - 1] = 0.5 * h;
            }
            Rule::Simpson => {
                if n.is_multiple_of(2) {
                    return Err(Error::Domain(format!(
                        "Simpson rule needs an odd number of points, got {n}"
                    )));
                }
                for (i, x) in w.iter_mut().enumerate() {
                    *x = if i == 0 || i == n - 1 {
                        h / 3.0
                    } else if i % 2 == 1 {
                        4.0 * h / 3.0
                    } else {
                        2.0 * h / 3.0
                    };
                }
            }
        }
        Ok(w)
    }
}

/// Mode functions sampled on a grid, with optional θ-derivatives on the same grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub grid: Grid,
    pub values: Vec<DVector<Complex64>>,
    pub derivatives: Option<Vec<DVector<Complex64>>>,
}

impl Samples {
    pub fn modes(&self) -> usize {
        self.values.len()
    }

    fn check(&self) -> Result<()> {
        let bad = |v: &DVector<Complex64>| v.len() != self.grid.len;
        if self.values.iter().any(bad) {
            return Err(Error::Shape(format!(
                "mode samples do not have {} points",
                self.grid.len
            )));
        }
        if let Some(d) = &self.derivatives {
            if d.len() != self.values.len() || d.iter().any(bad) {
                return Err(Error::Shape(
                    "derivative samples do not match the mode samples".into(),
                ));
            }
        }
        Ok(())
    }
}

fn inner(w: &[f64], f: &DVector<Complex64>, g: &DVector<Complex64>) -> Complex64 {
    w.iter()
        .zip(f.iter().zip(g.iter()))
        .map(|(w, (f, g))| *w * f.conj() * g)
        .sum()
}

/// Overlap tables by quadrature; (f|g) = Σ_i w_i conj(f_i) g_i.
pub fn overlaps_from_samples(
    values: &[DVector<Complex64>],
    derivatives: &[DVector<Complex64>],
    weights: &[f64],
) -> FamilyOverlaps {
    let n = values.len();
    FamilyOverlaps {
        overlap: DMatrix::from_fn(n, n, |k, l| inner(weights, &values[l], &values[k])),
        derivative: DMatrix::from_fn(n, n, |k, l| inner(weights, &values[l], &derivatives[k])),
        derivative_gram: DMatrix::from_fn(n, n, |k, l| {
            inner(weights, &derivatives[l], &derivatives[k])
        }),
    }
}

type Sampler<'a> = dyn Fn(f64) -> Result<Samples> + Send + Sync + 'a;

/// Family from a θ ↦ samples function. Without derivative samples the
/// θ-derivative is a central difference with step `step` (default 1e-5·max(1, |θ|)).
pub struct QuadratureFamily<'a> {
    n: usize,
    rule: Rule,
    sampler: Box<Sampler<'a>>,
    step: Option<f64>,
}

impl<'a> QuadratureFamily<'a> {
    pub fn new(
        n: usize,
        rule: Rule,
        sampler: impl Fn(f64) -> Result<Samples> + Send + Sync + 'a,
    ) -> Self {
        QuadratureFamily {
            n,
            rule,
            sampler: Box::new(sampler),
            step: None,
        }
    }

    pub fn with_step(mut self, h: f64) -> Self {
        self.step = Some(h);
        self
    }

    fn derivative_samples(&self, theta: f64, at: &Samples) -> Result<Vec<DVector<Complex64>>> {
        if let Some(d) = &at.derivatives {
            return Ok(d.clone());
        }
        let h = self.step.unwrap_or(1e-5 * theta.abs().max(1.0));
        let plus = (self.sampler)(theta + h)?;
        let minus = (self.sampler)(theta - h)?;
        if plus.grid != at.grid || minus.grid != at.grid {
            return Err(Error::Input(
                "finite-difference samples must share the grid; supply derivative samples instead"
                    .into(),
            ));
        }
        plus.check()?;
        minus.check()?;
        Ok(plus
            .values
            .iter()
            .zip(&minus.values)
            .map(|(p, m)| (p - m) / Complex64::new(2.0 * h, 0.0))
            .collect())
    }
}

impl ModeFamily for QuadratureFamily<'_> {
    fn mode_count(&self) -> usize {
        self.n
    }

    fn overlaps(&self, theta: f64) -> Result<FamilyOverlaps> {
        let s = (self.sampler)(theta)?;
        s.check()?;
        if s.modes() != self.n {
            return Err(Error::Shape(format!(
                "sampler returned {} modes, expected {}",
                s.modes(),
                self.n
            )));
        }
        let d = self.derivative_samples(theta, &s)?;
        let w = self.rule.weights(&s.grid)?;
        Ok(overlaps_from_samples(&s.values, &d, &w))
    }
}

/// A sampled family read from a file: one snapshot at a fixed θ.
///
/// ```text
/// # domain = -10 10
/// # spacing = 0.05
/// # modes = 2
/// # theta = 0.0
/// t,re_u0,im_u0,re_u1,im_u1,re_du0,im_du0,re_du1,im_du1
/// ```
/// The `theta` line and the derivative columns are optional; without derivative
/// columns the modes are treated as θ-independent.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFamily {
    pub theta: Option<f64>,
    pub rule: Rule,
    pub samples: Samples,
}

impl SampledFamily {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        Self::from_reader(file)
    }

    pub fn from_reader(mut r: impl Read) -> Result<Self> {
        let mut text = String::new();
        r.read_to_string(&mut text)
            .map_err(|e| Error::Input(e.to_string()))?;
        let mut domain = None;
        let mut spacing = None;
        let mut modes = None;
        let mut theta = None;
        let mut body_start = 0;
        for line in text.split_inclusive('\n') {
            let t = line.trim();
            if !t.starts_with('#') && !t.is_empty() {
                break;
            }
            body_start += line.len();
            let Some((key, value)) = t.trim_start_matches('#').split_once('=') else {
                continue;
            };
            let value = value.trim();
            let num = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|_| Error::Input(format!("header `{}`: bad number `{s}`", key.trim())))
            };
            match key.trim() {
                "domain" => {
                    let parts: Vec<&str> = value.split_whitespace().collect();
                    if parts.len() != 2 {
                        return Err(Error::Input("header `domain` needs two numbers".into()));
                    }
                    domain = Some((num(parts[0])?, num(parts[1])?));
                }
                "spacing" => spacing = Some(num(value)?),
                "modes" => {
                    modes = Some(value.parse::<usize>().map_err(|_| {
                        Error::Input(format!("header `modes`: bad count `{value}`"))
                    })?)
                }
                "theta" => theta = Some(num(value)?),
                other => return Err(Error::Input(format!("unknown header `{other}`"))),
            }
        }
        let (a, b) = domain.ok_or_else(|| Error::Input("missing header `domain`".into()))?;
        let h = spacing.ok_or_else(|| Error::Input("missing header `spacing`".into()))?;
        let n = modes.ok_or_else(|| Error::Input("missing header `modes`".into()))?;
        if n == 0 {
            return Err(Error::Input("header `modes` must be positive".into()));
        }

        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(&text.as_bytes()[body_start..]);
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::Input(e.to_string()))?
            .iter()
            .map(str::to_owned)
            .collect();
        let mut expect = vec!["t".to_owned()];
        for k in 0..n {
            expect.push(format!("re_u{k}"));
            expect.push(format!("im_u{k}"));
        }
        let with_derivatives = header.len() == 1 + 4 * n;
        if with_derivatives {
            for k in 0..n {
                expect.push(format!("re_du{k}"));
                expect.push(format!("im_du{k}"));
            }
        }
        if header != expect {
            return Err(Error::Input(format!(
                "column header {header:?} does not match {expect:?}"
            )));
        }

        let mut t = Vec::new();
        let mut cols: Vec<Vec<Complex64>> =
            vec![Vec::new(); if with_derivatives { 2 * n } else { n }];
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Input(e.to_string()))?;
            let x: Vec<f64> = rec
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::Input(format!("row {}: bad number `{s}`", row + 1)))
                })
                .collect::<Result<_>>()?;
            t.push(x[0]);
            for (c, col) in cols.iter_mut().enumerate() {
                col.push(Complex64::new(x[1 + 2 * c], x[2 + 2 * c]));
            }
        }
        let grid = Grid::new(a, h, t.len())?;
        let slack = 1e-9 * h.max(a.abs()).max(b.abs());
        if (grid.end() - b).abs() > slack {
            return Err(Error::Input(format!(
                "domain end {b} does not match {} rows at spacing {h}",
                t.len()
            )));
        }
        for (i, ti) in t.iter().enumerate() {
            if (ti - grid.point(i)).abs() > slack {
                return Err(Error::Input(format!(
                    "row {}: t = {ti} is off the grid",
                    i + 1
                )));
            }
        }
        let mut cols = cols.into_iter().map(DVector::from_vec);
        let values: Vec<_> = cols.by_ref().take(n).collect();
        let derivatives = with_derivatives.then(|| cols.collect());
        Ok(SampledFamily {
            theta,
            rule: Rule::Trapezoid,
            samples: Samples {
                grid,
                values,
                derivatives,
            },
        })
    }

    pub fn write(&self, mut w: impl Write) -> Result<()> {
        let io = |e: std::io::Error| Error::Input(e.to_string());
        let s = &self.samples;
        let n = s.modes();
        writeln!(w, "# domain = {:.16e} {:.16e}", s.grid.start, s.grid.end()).map_err(io)?;
        writeln!(w, "# spacing = {:.16e}", s.grid.step).map_err(io)?;
        writeln!(w, "# modes = {n}").map_err(io)?;
        if let Some(th) = self.theta {
            writeln!(w, "# theta = {th:.16e}").map_err(io)?;
        }
        let mut head = vec!["t".to_owned()];
        for k in 0..n {
            head.push(format!("re_u{k}"));
            head.push(format!("im_u{k}"));
        }
        if s.derivatives.is_some() {
            for k in 0..n {
                head.push(format!("re_du{k}"));
                head.push(format!("im_du{k}"));
            }
        }
        writeln!(w, "{}", head.join(",")).map_err(io)?;
        for i in 0..s.grid.len {
            let mut row = vec![format!("{:.16e}", s.grid.point(i))];
            for col in s.values.iter().chain(s.derivatives.iter().flatten()) {
                row.push(format!("{:.16e}", col[i].re));
                row.push(format!("{:.16e}", col[i].im));
            }
            writeln!(w, "{}", row.join(",")).map_err(io)?;
        }
        Ok(())
    }
}

impl ModeFamily for SampledFamily {
    fn mode_count(&self) -> usize {
        self.samples.modes()
    }

    fn overlaps(&self, theta: f64) -> Result<FamilyOverlaps> {
        if let Some(t0) = self.theta {
            if (theta - t0).abs() > 1e-12 * t0.abs().max(1.0) {
                return Err(Error::Domain(format!(
                    "sampled family is a snapshot at theta = {t0}, asked for {theta}"
                )));
            }
        }
        self.samples.check()?;
        let n = self.samples.modes();
        let zero = vec![DVector::zeros(self.samples.grid.len); n];
        let d = self.samples.derivatives.as_ref().unwrap_or(&zero);
        let w = self.rule.weights(&self.samples.grid)?;
        Ok(overlaps_from_samples(&self.samples.values, d, &w))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gauss_samples(grid: Grid, d: f64, with_derivative: bool) -> Samples {
        let c = std::f64::consts::PI.powf(-0.25);
        let f = |x: f64| c * (-(x - d) * (x - d) / 2.0).exp();
        let v = DVector::from_iterator(grid.len, grid.points().map(|x| Complex64::new(f(x), 0.0)));
        let dv = DVector::from_iterator(
            grid.len,
            grid.points().map(|x| Complex64::new((x - d) * f(x), 0.0)),
        );
        Samples {
            grid,
            values: vec![v],
            derivatives: with_derivative.then(|| vec![dv]),
        }
    }

    #[test]
    fn rules_integrate_a_gaussian() {
        let g = Grid::symmetric(12.0, 0.05).unwrap();
        for rule in [Rule::Trapezoid, Rule::Simpson] {
            let w = rule.weights(&g).unwrap();
            let s: f64 = g.points().zip(&w).map(|(x, w)| w * (-x * x).exp()).sum();
            assert_relative_eq!(s, std::f64::consts::PI.sqrt(), epsilon = 1e-12);
        }
        assert!(Rule::Simpson
            .weights(&Grid::new(0.0, 1.0, 4).unwrap())
            .is_err());
    }

    #[test]
    fn analytic_and_finite_difference_derivatives_agree() {
        let g = Grid::symmetric(12.0, 0.04).unwrap();
        let exact =
            QuadratureFamily::new(1, Rule::Trapezoid, move |d| Ok(gauss_samples(g, d, true)));
        let fd = QuadratureFamily::new(1, Rule::Simpson, move |d| Ok(gauss_samples(g, d, false)));
        let a = exact.overlaps(0.2).unwrap();
        let b = fd.overlaps(0.2).unwrap();
        assert_relative_eq!(a.derivative_gram[(0, 0)].re, 0.5, epsilon = 1e-12);
        assert_relative_eq!(b.derivative_gram[(0, 0)].re, 0.5, epsilon = 1e-8);
        assert!(a.derivative[(0, 0)].norm() < 1e-12);
    }

    #[test]
    fn file_round_trip() {
        let g = Grid::symmetric(8.0, 0.1).unwrap();
        let fam = SampledFamily {
            theta: Some(0.0),
            rule: Rule::Trapezoid,
            samples: gauss_samples(g, 0.0, true),
        };
        let mut buf = Vec::new();
        fam.write(&mut buf).unwrap();
        let back = SampledFamily::from_reader(buf.as_slice()).unwrap();
        assert_eq!(back.theta, Some(0.0));
        assert_eq!(back.samples.grid.len, g.len);
        let o = back.overlaps(0.0).unwrap();
        assert_relative_eq!(o.derivative_gram[(0, 0)].re, 0.5, epsilon = 1e-10);
        assert!(back.overlaps(1.0).is_err());
    }

    #[test]
    fn file_errors() {
        let bad = "# domain = 0 1\n# modes = 1\nt,re_u0,im_u0\n0,1,0\n1,1,0\n";
        assert!(SampledFamily::from_reader(bad.as_bytes()).is_err());
        let off =
            "# domain = 0 1\n# spacing = 0.5\n# modes = 1\nt,re_u0,im_u0\n0,1,0\n0.6,1,0\n1,1,0\n";
        assert!(SampledFamily::from_reader(off.as_bytes()).is_err());
        let cols = "# domain = 0 1\n# spacing = 1\n# modes = 1\nt,re_u0\n0,1\n1,1\n";
        assert!(SampledFamily::from_reader(cols.as_bytes()).is_err());
    }
}
