use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fetch::fetch_http;
use super::series::{load_csv, RawSeries};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Main,
    Exogenous,
}

/// One channel: a local CSV path (relative to the manifest) or an HTTP(S) URL.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub name: String,
    pub source: String,
    pub role: Role,
    /// Filled in once the source has been read.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_date: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_date: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    #[serde(rename = "channel", default)]
    pub channels: Vec<ChannelSpec>,
}

impl ChannelSpec {
    pub fn is_remote(&self) -> bool {
        self.source.starts_with("http://") || self.source.starts_with("https://")
    }
}

impl DatasetManifest {
    /// Exactly one main channel is required; it is moved to the front.
    pub fn validate(&self) -> Result<()> {
        let mains = self
            .channels
            .iter()
            .filter(|c| c.role == Role::Main)
            .count();
        if mains != 1 {
            return Err(Error::Config(format!(
                "a dataset manifest needs exactly one main channel, found {mains}"
            )));
        }
        let mut names: Vec<&str> = self.channels.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("channel `{}` listed twice", w[0])));
        }
        Ok(())
    }

    /// Channels with the main series first, others in manifest order.
    pub fn ordered(&self) -> Vec<&ChannelSpec> {
        let mut out: Vec<&ChannelSpec> = self
            .channels
            .iter()
            .filter(|c| c.role == Role::Main)
            .collect();
        out.extend(self.channels.iter().filter(|c| c.role != Role::Main));
        out
    }

    /// Reads every source (main first) and records each date range.
    pub fn load(&mut self, base_dir: &Path, cache_dir: &Path) -> Result<Vec<RawSeries>> {
        self.validate()?;
        let mut out = Vec::with_capacity(self.channels.len());
        for spec in self.ordered() {
            let mut s = if spec.is_remote() {
                fetch_http(&spec.source, cache_dir)?
            } else {
                load_csv(base_dir.join(&spec.source))?
            };
            if s.is_empty() {
                return Err(Error::Data(format!(
                    "channel `{}` has no observations",
                    spec.name
                )));
            }
            s.name = spec.name.clone();
            out.push(s);
        }
        for spec in &mut self.channels {
            let s = out
                .iter()
                .find(|s| s.name == spec.name)
                .expect("loaded above");
            spec.first_date = s.first_date().map(|d| d.to_string());
            spec.last_date = s.last_date().map(|d| d.to_string());
        }
        Ok(out)
    }
}
