use crate::adjoint::ObservationOperator;
use crate::error::{Error, Result};
use crate::fields::{Field2D, StateField};

/// Pixels where either vector is shorter than this have no cosine.
pub const COSINE_MIN_NORM: f64 = 1e-12;

/// Squared error of one frame, summed over channels and averaged over
/// pixels.
pub fn frame_mse(a: &StateField, b: &StateField) -> Result<f64> {
    if a.n_channels() != b.n_channels() || a.grid() != b.grid() {
        return Err(Error::Shape("frames differ in channels or grid".into()));
    }
    let s: f64 = a
        .channels()
        .iter()
        .zip(b.channels())
        .map(|(x, y)| x.values().iter().zip(y.values()).map(|(p, q)| (p - q) * (p - q)).sum::<f64>())
        .sum();
    Ok(s / a.grid().len() as f64)
}

/// `(1/K) (1/|Omega|) sum_k sum_x |H X_k(x) - Y_k(x)|^2` for full predicted
/// states and observed targets.
pub fn forecast_mse(pred: &[StateField], targets: &[StateField], obs: &ObservationOperator) -> Result<f64> {
    if pred.len() != targets.len() || pred.is_empty() {
        return Err(Error::Shape(format!("{} predictions for {} targets", pred.len(), targets.len())));
    }
    let mut s = 0.0;
    for (x, y) in pred.iter().zip(targets) {
        s += frame_mse(&obs.observe_state(x)?, y)?;
    }
    Ok(s / pred.len() as f64)
}

/// Mean over pixels of the cosine between two vector fields, skipping
/// pixels where either vector vanishes. `None` if every pixel is skipped.
pub fn frame_cosine(pred: (&Field2D, &Field2D), truth: (&Field2D, &Field2D)) -> Option<f64> {
    let (pu, pv, tu, tv) = (pred.0.values(), pred.1.values(), truth.0.values(), truth.1.values());
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..pu.len() {
        let np = pu[i].hypot(pv[i]);
        let nt = tu[i].hypot(tv[i]);
        if np < COSINE_MIN_NORM || nt < COSINE_MIN_NORM {
            continue;
        }
        sum += ((pu[i] * tu[i] + pv[i] * tv[i]) / (np * nt)).clamp(-1.0, 1.0);
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// `(1/K) sum_k (1/|Omega|) sum_x <u, v> / (|u| |v|)`; frames with no
/// defined pixel are left out of the average.
pub fn hidden_cosine(pred: &[(&Field2D, &Field2D)], truth: &[(&Field2D, &Field2D)]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Shape(format!("{} predictions for {} targets", pred.len(), truth.len())));
    }
    let vals: Vec<f64> = pred.iter().zip(truth).filter_map(|(p, t)| frame_cosine(*p, *t)).collect();
    if vals.is_empty() {
        return Err(Error::Config("no pixel with a defined cosine".into()));
    }
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Forecast MSE of predicting every target with the initial observation.
pub fn persistence_baseline(initial: &StateField, targets: &[StateField]) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::Shape("no targets".into()));
    }
    let mut s = 0.0;
    for y in targets {
        s += frame_mse(initial, y)?;
    }
    Ok(s / targets.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Grid2D;

    fn field(g: Grid2D, f: impl Fn(usize, usize) -> f64) -> Field2D {
        Field2D::from_index_fn(g, f)
    }

    #[test]
    fn definitions() {
        let g = Grid2D::unit_square(4, 4).unwrap();
        let h = field(g, |i, j| (i * 3 + j) as f64);
        let x = StateField::new(vec![("u".into(), Field2D::zeros(g)), ("h".into(), h.clone())]).unwrap();
        let obs = ObservationOperator::new(vec![1], 2).unwrap();
        let y = StateField::new(vec![("h".into(), h.clone())]).unwrap();
        assert_eq!(forecast_mse(&[x.clone()], &[y.clone()], &obs).unwrap(), 0.0);
        let y1 = StateField::new(vec![("h".into(), h.map(|v| v + 1.0))]).unwrap();
        assert_eq!(forecast_mse(&[x.clone(), x], &[y1.clone(), y1], &obs).unwrap(), 1.0);
        assert_eq!(persistence_baseline(&y, &[y.clone(), y.clone()]).unwrap(), 0.0);
        assert!(forecast_mse(&[], &[], &obs).is_err());
    }

    #[test]
    fn cosine_cases() {
        let g = Grid2D::unit_square(4, 4).unwrap();
        let u = field(g, |i, j| 1.0 + (i + j) as f64);
        let v = field(g, |i, _| i as f64 - 1.5);
        let (nu, nv) = (u.scale(-1.0), v.scale(-1.0));
        let (ru, rv) = (v.scale(-1.0), u.clone());
        assert!((hidden_cosine(&[(&u, &v)], &[(&u, &v)]).unwrap() - 1.0).abs() < 1e-15);
        assert!((hidden_cosine(&[(&nu, &nv)], &[(&u, &v)]).unwrap() + 1.0).abs() < 1e-15);
        assert!(hidden_cosine(&[(&ru, &rv)], &[(&u, &v)]).unwrap().abs() < 1e-15);
        // a zero pixel is skipped, not counted as zero
        let z = field(g, |i, j| if (i, j) == (0, 0) { 0.0 } else { 1.0 });
        let zv = Field2D::zeros(g);
        assert_eq!(frame_cosine((&z, &zv), (&z, &zv)), Some(1.0));
        assert_eq!(frame_cosine((&zv, &zv), (&z, &zv)), None);
        assert!(hidden_cosine(&[(&zv, &zv)], &[(&z, &zv)]).is_err());
    }
}
