use crate::error::{Error, Result};

/// Repeats the last observed value `horizon` times.
pub fn persistence_forecast(window: &[f64], horizon: usize) -> Result<Vec<f64>> {
    let Some(&last) = window.last() else {
        return Err(Error::Data(
            "persistence forecast of an empty window".into(),
        ));
    };
    Ok(vec![last; horizon])
}
