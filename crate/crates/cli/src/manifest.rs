//! Run manifests: every subcommand drops a `manifest.txt` beside its
//! outputs recording the command, the hash of the resolved configuration,
//! the seed, and tool versions. Deliberately no timestamps or hostnames,
//! so identical runs write identical manifests.

use std::fs;
use std::path::Path;

use crate::config::ResolvedConfig;
use crate::CliError;

pub fn write_manifest(command: &str, rc: &ResolvedConfig, dir: &Path) -> Result<(), CliError> {
    let text = format!(
        "command = \"{command}\"\n\
         config_sha256 = \"{}\"\n\
         seed = {}\n\
         eegdec_version = \"{}\"\n\
         eegdec_cli_version = \"{}\"\n",
        rc.sha256_hex,
        rc.run.seed,
        eegdec::VERSION,
        env!("CARGO_PKG_VERSION"),
    );
    let path = dir.join("manifest.txt");
    fs::write(&path, text)
        .map_err(|e| CliError::Output(format!("writing {}: {e}", path.display())))?;
    // The resolved config itself rides along for exact reruns.
    let cfg_path = dir.join("config.toml");
    fs::write(&cfg_path, &rc.canonical_toml)
        .map_err(|e| CliError::Output(format!("writing {}: {e}", cfg_path.display())))
}
