use std::path::PathBuf;

use clap::Args;
use nirvar::{NirvarError, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Flags shared by every command; they override the matching config keys.
#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON config file; unspecified keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Top-level seed from which every random stream is derived.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Input file (panel CSV, or eigenvalue list for `mpfit`).
    #[arg(long)]
    pub input: Option<PathBuf>,
}

pub trait RunConfig: Serialize + DeserializeOwned + Default {
    fn seed_mut(&mut self) -> &mut u64;
    fn out_mut(&mut self) -> &mut PathBuf;
    fn input_mut(&mut self) -> Option<&mut Option<PathBuf>> {
        None
    }
}

macro_rules! run_config {
    ($ty:ty) => {
        impl $crate::config::RunConfig for $ty {
            fn seed_mut(&mut self) -> &mut u64 {
                &mut self.seed
            }
            fn out_mut(&mut self) -> &mut std::path::PathBuf {
                &mut self.out
            }
        }
    };
    ($ty:ty, $input:ident) => {
        impl $crate::config::RunConfig for $ty {
            fn seed_mut(&mut self) -> &mut u64 {
                &mut self.seed
            }
            fn out_mut(&mut self) -> &mut std::path::PathBuf {
                &mut self.out
            }
            fn input_mut(&mut self) -> Option<&mut Option<std::path::PathBuf>> {
                Some(&mut self.$input)
            }
        }
    };
}
pub(crate) use run_config;

pub fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Read the config (or take the defaults), apply the flag overrides, create
/// the output directory and save the resolved config there.
pub fn resolve<C: RunConfig>(args: &CommonArgs) -> Result<C> {
    let mut cfg: C = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| NirvarError::Config(format!("cannot read config {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| NirvarError::Config(format!("config {}: {e}", path.display())))?
        }
        None => C::default(),
    };
    if let Some(seed) = args.seed {
        *cfg.seed_mut() = seed;
    }
    if let Some(out) = &args.out {
        *cfg.out_mut() = out.clone();
    }
    if let Some(input) = &args.input {
        match cfg.input_mut() {
            Some(slot) => *slot = Some(input.clone()),
            None => return Err(NirvarError::Config("this command takes no --input".into())),
        }
    }
    let out = cfg.out_mut().clone();
    std::fs::create_dir_all(&out)?;
    crate::io::write_json(&out, "config.json", &cfg)?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Default, Serialize, Deserialize)]
    #[serde(deny_unknown_fields, default)]
    struct Toy {
        input: Option<PathBuf>,
        seed: u64,
        out: PathBuf,
    }
    run_config!(Toy, input);

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.json");
        std::fs::write(&path, r#"{"seed": 4, "out": "ignored"}"#).unwrap();
        let out = dir.path().join("o");
        let args = CommonArgs { config: Some(path), seed: Some(9), out: Some(out.clone()), input: None };
        let cfg: Toy = resolve(&args).unwrap();
        assert_eq!(cfg.seed, 9);
        let saved: Toy = serde_json::from_str(&std::fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
        assert_eq!(saved.seed, 9);
        assert_eq!(saved.out, out);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.json");
        std::fs::write(&path, r#"{"sed": 4}"#).unwrap();
        let args = CommonArgs { config: Some(path), seed: None, out: Some(dir.path().into()), input: None };
        assert!(resolve::<Toy>(&args).unwrap_err().is_config());
    }
}
