use std::io::Read;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::series::{parse_csv, RawSeries};
use crate::error::{Error, Result};

/// Cache location of a URL: the hex SHA-256 of the URL with a `.csv` suffix.
pub fn cache_path(url: &str, cache_dir: &Path) -> PathBuf {
    let digest = Sha256::digest(url.as_bytes());
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    cache_dir.join(format!("{hex}.csv"))
}

fn series_name(url: &str) -> String {
    let tail = url
        .split(['?', '#'])
        .next()
        .unwrap_or(url)
        .trim_end_matches('/');
    let last = tail.rsplit('/').next().unwrap_or(tail);
    let stem = last.rsplit_once('.').map_or(last, |(s, _)| s);
    if stem.is_empty() {
        "series".into()
    } else {
        stem.to_string()
    }
}

/// Downloads a `date,value` CSV, validating it before caching. A cached copy
/// is served without touching the network.
pub fn fetch_http(url: &str, cache_dir: impl AsRef<Path>) -> Result<RawSeries> {
    let cache_dir = cache_dir.as_ref();
    let cached = cache_path(url, cache_dir);
    let name = series_name(url);
    if cached.exists() {
        let bytes = std::fs::read(&cached)?;
        return parse_csv(&bytes, &cached.display().to_string(), &name);
    }
    let fetch_err = |msg: String| Error::Fetch {
        url: url.to_string(),
        msg,
    };
    let mut response = ureq::get(url)
        .call()
        .map_err(|e| fetch_err(e.to_string()))?;
    let mut bytes = Vec::new();
    response
        .body_mut()
        .as_reader()
        .read_to_end(&mut bytes)
        .map_err(|e| fetch_err(e.to_string()))?;
    let series = parse_csv(&bytes, url, &name)?;
    std::fs::create_dir_all(cache_dir)?;
    let tmp = cached.with_extension("part");
    std::fs::write(&tmp, &bytes)?;
    std::fs::rename(&tmp, &cached)?;
    Ok(series)
}
