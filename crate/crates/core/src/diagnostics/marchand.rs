use nalgebra::DVector;

use crate::backward::GuidingData;
use crate::error::{Error, Result};
use crate::linalg::SpdFactor;
use crate::model::DiffusionModel;

/// The two guiding terms at knot `k`:
///
/// ```text
/// guid1 = a L(t)' M(t) (v - L(t) x)
/// guid2 = a L(t)' (L(t) a L(t)')^{-1} (v - L(t) x) / (T - t)
/// ```
///
/// with `a = a(t, x)` from the target model.
pub fn marchand_guidings(
    model: &DiffusionModel,
    gd: &GuidingData,
    k: usize,
    x: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = gd.grid().intervals();
    if k >= n {
        return Err(Error::InvalidInput(format!("knot {k} is not before the horizon")));
    }
    let t = gd.grid().knots()[k];
    let u = gd.horizon() - t;
    let l = gd.l_at(k);
    let a = model.diffusivity(t, x);
    let res = gd.value() - l * x;

    let mdag = SpdFactor::new(gd.mdag_at(k)).ok_or(Error::NotPositiveDefinite { knot: k, time: t })?;
    let guid1 = &a * l.transpose() * mdag.solve(&res);

    let lal = l * &a * l.transpose();
    let lal = SpdFactor::new(&lal).ok_or(Error::NotPositiveDefinite { knot: k, time: t })?;
    let guid2 = &a * l.transpose() * lal.solve(&res) / u;
    Ok((guid1, guid2))
}

/// Closed forms for the integrated diffusion observed through `L = [1 0]`:
/// `guid1 = (0, 3 r / (T - t)^2)` and `guid2 = (0, r / (T - t)^2)` with
/// `r = v - x_1 - (T - t) x_2`.
pub fn marchand_closed_form(v: f64, horizon: f64, t: f64, x: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    if t >= horizon {
        return Err(Error::InvalidInput(format!("t = {t} is not before the horizon {horizon}")));
    }
    let u = horizon - t;
    let r = v - x[0] - u * x[1];
    let g1 = DVector::from_vec(vec![0.0, 3.0 * r / (u * u)]);
    let g2 = DVector::from_vec(vec![0.0, r / (u * u)]);
    Ok((g1, g2))
}
