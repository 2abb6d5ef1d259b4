use super::SandboxError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// How to turn a source file into a running process.
///
/// Templates are split on whitespace; `{src}` expands to the source file,
/// `{exe}` to the compiled binary and `{dir}` to the scratch directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunnerSpec {
    pub name: String,
    /// File name the source is written to inside the scratch directory.
    pub source_file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compile: Option<String>,
    pub run: String,
}

impl RunnerSpec {
    pub fn python() -> Self {
        Self {
            name: "python3".into(),
            source_file: "main.py".into(),
            compile: None,
            run: "python3 -I -S {src}".into(),
        }
    }

    pub fn c() -> Self {
        Self {
            name: "c".into(),
            source_file: "main.c".into(),
            compile: Some("cc -O2 -o {exe} {src}".into()),
            run: "{exe}".into(),
        }
    }

    pub fn sh() -> Self {
        Self {
            name: "sh".into(),
            source_file: "main.sh".into(),
            compile: None,
            run: "sh {src}".into(),
        }
    }

    pub(crate) fn expand(&self, template: &str, dir: &Path) -> Result<Vec<String>, SandboxError> {
        let src = dir.join(&self.source_file);
        let exe = dir.join("prog");
        let argv: Vec<String> = template
            .split_whitespace()
            .map(|arg| {
                arg.replace("{src}", &src.to_string_lossy())
                    .replace("{exe}", &exe.to_string_lossy())
                    .replace("{dir}", &dir.to_string_lossy())
            })
            .collect();
        if argv.is_empty() {
            return Err(SandboxError::BadRunner(
                self.name.clone(),
                "empty command".into(),
            ));
        }
        Ok(argv)
    }

    /// Checks that every executable the runner names can be found, so a
    /// misconfigured runner fails up front rather than as per-test errors.
    pub fn check_available(&self) -> Result<(), SandboxError> {
        if self.source_file.is_empty() || self.source_file.contains('/') {
            return Err(SandboxError::BadRunner(
                self.name.clone(),
                "source_file must be a bare file name".into(),
            ));
        }
        for template in self.compile.iter().chain(std::iter::once(&self.run)) {
            let program = template.split_whitespace().next().ok_or_else(|| {
                SandboxError::BadRunner(self.name.clone(), "empty command".into())
            })?;
            if program.contains('{') {
                continue;
            }
            if resolve_program(program).is_none() {
                return Err(SandboxError::RunnerNotFound {
                    runner: self.name.clone(),
                    program: program.to_string(),
                });
            }
        }
        Ok(())
    }
}

fn resolve_program(program: &str) -> Option<PathBuf> {
    let is_exec = |p: &Path| {
        use std::os::unix::fs::PermissionsExt;
        p.metadata()
            .is_ok_and(|m| m.is_file() && m.permissions().mode() & 0o111 != 0)
    };
    if program.contains('/') {
        let p = PathBuf::from(program);
        return is_exec(&p).then_some(p);
    }
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path)
        .map(|d| d.join(program))
        .find(|p| is_exec(p))
}

/// Named runners, as loaded from a `[[runner]]` TOML file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunnerSet {
    runners: BTreeMap<String, RunnerSpec>,
}

#[derive(Deserialize, Serialize)]
struct RunnerFile {
    runner: Vec<RunnerSpec>,
}

impl Default for RunnerSet {
    fn default() -> Self {
        Self::from_specs([RunnerSpec::python(), RunnerSpec::c(), RunnerSpec::sh()])
    }
}

impl RunnerSet {
    pub fn from_specs(specs: impl IntoIterator<Item = RunnerSpec>) -> Self {
        Self {
            runners: specs.into_iter().map(|s| (s.name.clone(), s)).collect(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        let file: RunnerFile = toml::from_str(text)?;
        Ok(Self::from_specs(file.runner))
    }

    pub fn to_toml(&self) -> String {
        let file = RunnerFile {
            runner: self.runners.values().cloned().collect(),
        };
        toml::to_string(&file).expect("runner specs serialize")
    }

    pub fn get(&self, name: &str) -> Option<&RunnerSpec> {
        self.runners.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.runners.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expands_placeholders() {
        let argv = RunnerSpec::c()
            .expand("cc -o {exe} {src}", Path::new("/tmp/x"))
            .unwrap();
        assert_eq!(argv, ["cc", "-o", "/tmp/x/prog", "/tmp/x/main.c"]);
    }

    #[test]
    fn missing_program_is_config_error() {
        let spec = RunnerSpec {
            name: "ghost".into(),
            source_file: "a.g".into(),
            compile: None,
            run: "definitely-not-a-real-interpreter-42 {src}".into(),
        };
        assert!(matches!(
            spec.check_available(),
            Err(SandboxError::RunnerNotFound { .. })
        ));
        assert!(RunnerSpec::sh().check_available().is_ok());
    }

    #[test]
    fn toml_round_trip() {
        let set = RunnerSet::default();
        let back = RunnerSet::from_toml(&set.to_toml()).unwrap();
        assert_eq!(back, set);
        assert!(back.get("python3").is_some());
        assert!(back.get("cobol99").is_none());
    }
}
