//! Central finite-difference gradient checker.

/// One evaluation of the scalar function under test.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub value: f64,
    /// Discrete branch decisions taken during the evaluation (relu sides,
    /// pooling winners). A coordinate whose ± probes change the signature
    /// straddles a kink and is skipped.
    pub signature: Vec<u32>,
}

impl Probe {
    pub fn smooth(value: f64) -> Self {
        Self {
            value,
            signature: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Coordinate with the largest relative error.
    pub worst: Option<usize>,
    pub checked: usize,
    pub skipped: Vec<usize>,
    /// Every checked coordinate, in index order.
    pub coordinates: Vec<Coordinate>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coordinate {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    /// Function value at the unperturbed point.
    pub value: f64,
}

impl Coordinate {
    pub fn rel_error(&self) -> f64 {
        relative_error(self.analytic, self.numeric)
    }

    pub fn abs_error(&self) -> f64 {
        (self.analytic - self.numeric).abs()
    }
}

/// |a − n| / max(|a|, |n|, 1e-8)
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compare `analytic` against central differences of `f` around `point`.
pub fn grad_check<F>(mut f: F, point: &[f64], analytic: &[f64], step: f64) -> GradCheckReport
where
    F: FnMut(&[f64]) -> Probe,
{
    assert_eq!(point.len(), analytic.len(), "gradient length differs from point");
    let base = f(point);
    let (value, base) = (base.value, base.signature);
    let mut x = point.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        skipped: Vec::new(),
        coordinates: Vec::new(),
    };
    for i in 0..x.len() {
        x[i] = point[i] + step;
        let plus = f(&x);
        x[i] = point[i] - step;
        let minus = f(&x);
        x[i] = point[i];
        if plus.signature != base || minus.signature != base {
            report.skipped.push(i);
            continue;
        }
        let numeric = (plus.value - minus.value) / (2.0 * step);
        let err = relative_error(analytic[i], numeric);
        report.checked += 1;
        report.coordinates.push(Coordinate {
            index: i,
            analytic: analytic[i],
            numeric,
            value,
        });
        if err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst = Some(i);
        }
    }
    report
}
