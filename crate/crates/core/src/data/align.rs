use chrono::NaiveDate;

use super::series::RawSeries;
use crate::error::{Error, Result};

/// Channels stacked on the main series' calendar, row-major `rows × channels`.
#[derive(Clone, Debug, PartialEq)]
pub struct Aligned {
    pub names: Vec<String>,
    pub calendar: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

impl Aligned {
    pub fn rows(&self) -> usize {
        self.calendar.len()
    }

    pub fn channels(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let d = self.channels();
        &self.values[r * d..(r + 1) * d]
    }
}

/// Aligns every series onto the dates of the first (main) series. Other
/// channels are carried forward from their latest observation on or before
/// each date. Dates before every channel has started, or after any channel
/// has ended, are dropped.
pub fn align(series: &[RawSeries]) -> Result<Aligned> {
    let Some(main) = series.first() else {
        return Err(Error::Data("alignment needs at least one series".into()));
    };
    let start = series.iter().filter_map(RawSeries::first_date).max();
    let end = series.iter().filter_map(RawSeries::last_date).min();
    let (Some(start), Some(end)) = (start, end) else {
        return Err(Error::Data("cannot align an empty series".into()));
    };
    let mut cursors = vec![0usize; series.len()];
    let mut calendar = Vec::new();
    let mut values = Vec::new();
    for &(date, _) in &main.observations {
        if date < start || date > end {
            continue;
        }
        for (s, cursor) in series.iter().zip(cursors.iter_mut()) {
            let obs = &s.observations;
            while *cursor + 1 < obs.len() && obs[*cursor + 1].0 <= date {
                *cursor += 1;
            }
            values.push(obs[*cursor].1);
        }
        calendar.push(date);
    }
    if calendar.is_empty() {
        return Err(Error::Data(format!(
            "series `{}` shares no dates with the other channels",
            main.name
        )));
    }
    Ok(Aligned {
        names: series.iter().map(|s| s.name.clone()).collect(),
        calendar,
        values,
    })
}
