//! Matrix exponential (nalgebra's scaling and squaring Padé scheme) with
//! input validation.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `exp(a)` for a square matrix.
pub fn expm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    assert!(a.is_square(), "expm of a non-square matrix");
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("expm of a non-finite matrix".into()));
    }
    let e = a.exp();
    if e.iter().any(|x| !x.is_finite()) {
        return Err(Error::Internal("matrix exponential overflowed".into()));
    }
    Ok(e)
}
