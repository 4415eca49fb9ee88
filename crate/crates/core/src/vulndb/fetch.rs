//! Paged download from the NVD CVE API (online mode only).

use std::time::Duration;

pub const NVD_API_URL: &str = "https://services.nvd.nist.gov/rest/json/cves/2.0";

#[derive(Debug, thiserror::Error)]
pub enum FetchError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("HTTP status {0}")]
    Status(u16),
    #[error("malformed page: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone)]
pub struct FetchOptions {
    pub base_url: String,
    pub api_key: Option<String>,
    /// Extra query parameters, e.g. `("cpeName", "...")`.
    pub query: Vec<(String, String)>,
    pub page_size: u32,
    pub timeout: Duration,
    /// Pause between page requests.
    pub page_delay: Duration,
}

impl Default for FetchOptions {
    fn default() -> Self {
        FetchOptions {
            base_url: NVD_API_URL.into(),
            api_key: None,
            query: Vec::new(),
            page_size: 2000,
            timeout: Duration::from_secs(60),
            page_delay: Duration::from_secs(6),
        }
    }
}

/// Downloads every page of a query and returns the raw JSON documents, which
/// have the same shape as feed files.
pub fn fetch_nvd_pages(opts: &FetchOptions) -> Result<Vec<Vec<u8>>, FetchError> {
    let agent: ureq::Agent =
        ureq::Agent::config_builder().timeout_global(Some(opts.timeout)).http_status_as_error(false).build().into();
    let mut pages = Vec::new();
    let mut start = 0u64;
    loop {
        let mut req = agent
            .get(&opts.base_url)
            .query("startIndex", start.to_string())
            .query("resultsPerPage", opts.page_size.to_string());
        for (k, v) in &opts.query {
            req = req.query(k, v);
        }
        if let Some(key) = &opts.api_key {
            req = req.header("apiKey", key);
        }
        let mut resp = req.call().map_err(|e| FetchError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if status != 200 {
            return Err(FetchError::Status(status));
        }
        let body = resp.body_mut().read_to_vec().map_err(|e| FetchError::Transport(e.to_string()))?;
        let head: serde_json::Value = serde_json::from_slice(&body).map_err(|e| FetchError::Malformed(e.to_string()))?;
        let total = head["totalResults"].as_u64().ok_or_else(|| FetchError::Malformed("missing totalResults".into()))?;
        let got = head["vulnerabilities"].as_array().map(Vec::len).unwrap_or(0) as u64;
        pages.push(body);
        start += got;
        log::info!("fetched {start}/{total} records");
        if got == 0 || start >= total {
            return Ok(pages);
        }
        std::thread::sleep(opts.page_delay);
    }
}
