//! Run configuration: flags, then `FIRMSCAN_*` variables, then the config file.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use firmscan_core::classify::llm::API_KEY_ENV;

use crate::args::{ClassifierMode, GlobalArgs};
use crate::error::CliError;

pub const DEFAULT_CACHE_DIR: &str = ".firmscan-cache";
pub const DEFAULT_OUT_DIR: &str = "firmscan-out";
pub const DEFAULT_LLM_MODEL: &str = "gpt-4o";
pub const NVD_API_KEY_ENV: &str = "FIRMSCAN_NVD_API_KEY";

const KNOWN_KEYS: [&str; 10] = [
    "index",
    "cache_dir",
    "out",
    "offline",
    "classifier",
    "llm_endpoint",
    "llm_model",
    "jobs",
    "reproducible",
    "nvd_feeds",
];

#[derive(Clone)]
pub struct RunConfig {
    pub nvd_feed_paths: Vec<PathBuf>,
    pub index_path: PathBuf,
    pub cache_dir: PathBuf,
    pub classifier_mode: ClassifierMode,
    pub llm_endpoint: Option<String>,
    pub llm_model: String,
    pub llm_api_key: Option<String>,
    pub nvd_api_key: Option<String>,
    pub offline: bool,
    pub reproducible: bool,
    pub parallelism: usize,
    pub out_dir: PathBuf,
    pub stdout: bool,
}

impl fmt::Debug for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RunConfig")
            .field("nvd_feed_paths", &self.nvd_feed_paths)
            .field("index_path", &self.index_path)
            .field("cache_dir", &self.cache_dir)
            .field("classifier_mode", &self.classifier_mode)
            .field("llm_endpoint", &self.llm_endpoint)
            .field("llm_model", &self.llm_model)
            .field("offline", &self.offline)
            .field("reproducible", &self.reproducible)
            .field("parallelism", &self.parallelism)
            .field("out_dir", &self.out_dir)
            .finish_non_exhaustive()
    }
}

/// Parses `key = value` lines; `#` starts a comment line.
pub fn parse_config_file(text: &str) -> Result<HashMap<String, String>, CliError> {
    let mut out = HashMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("config line {}: expected key=value", n + 1)))?;
        let k = k.trim().to_ascii_lowercase().replace('-', "_");
        if !KNOWN_KEYS.contains(&k.as_str()) {
            return Err(CliError::Config(format!("config line {}: unknown key {k:?}", n + 1)));
        }
        out.insert(k, v.trim().to_owned());
    }
    Ok(out)
}

fn parse_bool(key: &str, v: &str) -> Result<bool, CliError> {
    match v.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(CliError::Config(format!("{key}: expected a boolean, got {v:?}"))),
    }
}

fn parse_mode(v: &str) -> Result<ClassifierMode, CliError> {
    match v {
        "rule" => Ok(ClassifierMode::Rule),
        "rule-then-llm" => Ok(ClassifierMode::RuleThenLlm),
        _ => Err(CliError::Config(format!("classifier: expected rule or rule-then-llm, got {v:?}"))),
    }
}

impl RunConfig {
    pub fn resolve(args: &GlobalArgs, env: impl Fn(&str) -> Option<String>) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("config file {}: {e}", p.display())))?;
                parse_config_file(&text)?
            }
            None => HashMap::new(),
        };
        let var = |name: &str| env(name).filter(|v| !v.is_empty());
        let lookup =
            |key: &str| var(&format!("FIRMSCAN_{}", key.to_ascii_uppercase())).or_else(|| file.get(key).cloned());

        let cache_dir = args.cache_dir.clone().or_else(|| lookup("cache_dir").map(PathBuf::from));
        let cache_dir = cache_dir.unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR));
        let index_path = args
            .index
            .clone()
            .or_else(|| lookup("index").map(PathBuf::from))
            .unwrap_or_else(|| cache_dir.join("nvd-index.json"));
        let out_dir = args
            .out
            .clone()
            .or_else(|| lookup("out").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));

        let offline = if args.online {
            false
        } else if args.offline {
            true
        } else {
            lookup("offline").map(|v| parse_bool("offline", &v)).transpose()?.unwrap_or(true)
        };
        let reproducible = args.reproducible
            || lookup("reproducible").map(|v| parse_bool("reproducible", &v)).transpose()?.unwrap_or(false);
        let classifier_mode = match args.classifier {
            Some(m) => m,
            None => lookup("classifier").map(|v| parse_mode(&v)).transpose()?.unwrap_or(ClassifierMode::Rule),
        };
        let parallelism = match args.jobs {
            Some(n) => n as usize,
            None => match lookup("jobs") {
                Some(v) => v
                    .parse::<usize>()
                    .ok()
                    .filter(|n| *n >= 1)
                    .ok_or_else(|| CliError::Config(format!("jobs: expected a positive integer, got {v:?}")))?,
                None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            },
        };
        let nvd_feed_paths = lookup("nvd_feeds")
            .map(|v| v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(PathBuf::from).collect())
            .unwrap_or_default();

        let cfg = RunConfig {
            nvd_feed_paths,
            index_path,
            cache_dir,
            classifier_mode,
            llm_endpoint: args.llm_endpoint.clone().or_else(|| lookup("llm_endpoint")),
            llm_model: args.llm_model.clone().or_else(|| lookup("llm_model")).unwrap_or_else(|| DEFAULT_LLM_MODEL.into()),
            llm_api_key: var(API_KEY_ENV),
            nvd_api_key: var(NVD_API_KEY_ENV),
            offline,
            reproducible,
            parallelism,
            out_dir,
            stdout: args.stdout,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.classifier_mode == ClassifierMode::RuleThenLlm {
            if self.llm_endpoint.is_none() {
                return Err(CliError::Config("--classifier rule-then-llm needs --llm-endpoint".into()));
            }
            if self.llm_api_key.is_none() {
                return Err(CliError::Config(format!("--classifier rule-then-llm needs {API_KEY_ENV}")));
            }
        }
        Ok(())
    }

    pub fn firmware_out_dir(&self, firmware_id: &str) -> PathBuf {
        self.out_dir.join(firmware_id)
    }

    pub fn index_path(&self) -> &Path {
        &self.index_path
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env_of(pairs: &[(&str, &str)]) -> impl Fn(&str) -> Option<String> {
        let map: HashMap<String, String> = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        move |k| map.get(k).cloned()
    }

    #[test]
    fn flags_beat_env_beat_file() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("firmscan.conf");
        std::fs::write(&file, "# comment\nout = from-file\ncache_dir = file-cache\njobs = 3\nreproducible = yes\n").unwrap();
        let args = GlobalArgs { config: Some(file.clone()), ..Default::default() };
        let cfg = RunConfig::resolve(&args, env_of(&[("FIRMSCAN_OUT", "from-env")])).unwrap();
        assert_eq!(cfg.out_dir, PathBuf::from("from-env"));
        assert_eq!(cfg.cache_dir, PathBuf::from("file-cache"));
        assert_eq!(cfg.index_path, PathBuf::from("file-cache/nvd-index.json"));
        assert_eq!(cfg.parallelism, 3);
        assert!(cfg.reproducible);
        assert!(cfg.offline);

        let args = GlobalArgs { config: Some(file), out: Some("from-flag".into()), jobs: Some(1), ..Default::default() };
        let cfg = RunConfig::resolve(&args, env_of(&[("FIRMSCAN_OUT", "from-env"), ("FIRMSCAN_JOBS", "8")])).unwrap();
        assert_eq!(cfg.out_dir, PathBuf::from("from-flag"));
        assert_eq!(cfg.parallelism, 1);
    }

    #[test]
    fn online_flag_and_env() {
        let cfg = RunConfig::resolve(&GlobalArgs::default(), env_of(&[("FIRMSCAN_OFFLINE", "false")])).unwrap();
        assert!(!cfg.offline);
        let args = GlobalArgs { offline: true, ..Default::default() };
        assert!(RunConfig::resolve(&args, env_of(&[("FIRMSCAN_OFFLINE", "false")])).unwrap().offline);
    }

    #[test]
    fn llm_mode_needs_endpoint_and_credential() {
        let args = GlobalArgs { classifier: Some(ClassifierMode::RuleThenLlm), ..Default::default() };
        assert!(matches!(RunConfig::resolve(&args, env_of(&[])), Err(CliError::Config(_))));
        let args = GlobalArgs { llm_endpoint: Some("http://localhost:1/v1".into()), ..args };
        assert!(matches!(RunConfig::resolve(&args, env_of(&[])), Err(CliError::Config(_))));
        let cfg = RunConfig::resolve(&args, env_of(&[(API_KEY_ENV, "secret")])).unwrap();
        assert_eq!(cfg.llm_api_key.as_deref(), Some("secret"));
        assert!(!format!("{cfg:?}").contains("secret"));
    }

    #[test]
    fn bad_config_values() {
        assert!(parse_config_file("nonsense").is_err());
        assert!(parse_config_file("colour = red").is_err());
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c");
        std::fs::write(&file, "jobs = 0\n").unwrap();
        let args = GlobalArgs { config: Some(file), ..Default::default() };
        assert!(matches!(RunConfig::resolve(&args, env_of(&[])), Err(CliError::Config(_))));
    }
}
