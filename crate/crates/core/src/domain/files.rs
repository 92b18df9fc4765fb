//! JSON schemas for domain and profile files.
//!
//! Domain: `{"name": ..., "issues": [{"name": ..., "values": [...]}]}`.
//! Profile: `{"domain": ..., "weights": [...], "evaluations": {issue: {value: real}},
//! "reservation": ..., "discount": ...}`.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::domain::{Domain, Issue, PreferenceProfile};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainFile {
    pub name: String,
    pub issues: Vec<IssueFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IssueFile {
    pub name: String,
    /// Only `"discrete"` is accepted; omitted means discrete.
    #[serde(rename = "type", default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileFile {
    pub domain: String,
    pub weights: Vec<f64>,
    pub evaluations: IndexMap<String, IndexMap<String, f64>>,
    pub reservation: f64,
    pub discount: f64,
}

impl DomainFile {
    pub fn into_domain(self) -> Result<Domain> {
        let mut issues = Vec::with_capacity(self.issues.len());
        for issue in self.issues {
            if let Some(kind) = issue.kind.as_deref() {
                if kind != "discrete" {
                    return Err(Error::validation(format!(
                        "issue '{}' has type '{kind}': only discrete issues are supported",
                        issue.name
                    )));
                }
            }
            issues.push(Issue {
                name: issue.name,
                values: issue.values,
            });
        }
        Domain::new(self.name, issues)
    }

    pub fn from_domain(domain: &Domain) -> Self {
        Self {
            name: domain.name().to_string(),
            issues: domain
                .issues()
                .iter()
                .map(|i| IssueFile {
                    name: i.name.clone(),
                    kind: None,
                    values: i.values.clone(),
                })
                .collect(),
        }
    }
}

impl ProfileFile {
    pub fn into_profile(self, domain: Arc<Domain>) -> Result<PreferenceProfile> {
        if self.domain != domain.name() {
            return Err(Error::validation(format!(
                "profile refers to domain '{}' but was loaded against '{}'",
                self.domain,
                domain.name()
            )));
        }
        for key in self.evaluations.keys() {
            if domain.issue_index(key).is_none() {
                return Err(Error::validation(format!(
                    "evaluations name unknown issue '{key}'"
                )));
            }
        }
        let mut evaluations = Vec::with_capacity(domain.n_issues());
        for issue in domain.issues() {
            let evals = self.evaluations.get(&issue.name).ok_or_else(|| {
                Error::validation(format!("evaluations missing issue '{}'", issue.name))
            })?;
            for key in evals.keys() {
                if !issue.values.contains(key) {
                    return Err(Error::validation(format!(
                        "evaluations of issue '{}' name unknown value '{key}'",
                        issue.name
                    )));
                }
            }
            let row = issue
                .values
                .iter()
                .map(|v| {
                    evals.get(v).copied().ok_or_else(|| {
                        Error::validation(format!(
                            "evaluations of issue '{}' missing value '{v}'",
                            issue.name
                        ))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            evaluations.push(row);
        }
        PreferenceProfile::new(
            domain,
            self.weights,
            evaluations,
            self.reservation,
            self.discount,
        )
    }

    pub fn from_profile(profile: &PreferenceProfile) -> Self {
        let domain = profile.domain();
        let evaluations = domain
            .issues()
            .iter()
            .zip(profile.evaluations())
            .map(|(issue, evals)| {
                let row = issue
                    .values
                    .iter()
                    .cloned()
                    .zip(evals.iter().copied())
                    .collect();
                (issue.name.clone(), row)
            })
            .collect();
        Self {
            domain: domain.name().to_string(),
            weights: profile.weights().to_vec(),
            evaluations,
            reservation: profile.reservation(),
            discount: profile.discount(),
        }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|source| Error::Parse {
        path: path.to_path_buf(),
        source,
    })
}

pub fn parse_domain(path: impl AsRef<Path>) -> Result<Domain> {
    read_json::<DomainFile>(path.as_ref())?.into_domain()
}

pub fn parse_profile(path: impl AsRef<Path>, domain: Arc<Domain>) -> Result<PreferenceProfile> {
    read_json::<ProfileFile>(path.as_ref())?.into_profile(domain)
}

pub fn write_domain(domain: &Domain, path: impl AsRef<Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(&DomainFile::from_domain(domain))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn write_profile(profile: &PreferenceProfile, path: impl AsRef<Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(&ProfileFile::from_profile(profile))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{gen_domain, GenSpec};

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let scenario = gen_domain(&GenSpec::uniform(3, 4, 11)).unwrap();
        let dpath = dir.path().join("d.json");
        let ppath = dir.path().join("p.json");
        write_domain(&scenario.domain, &dpath).unwrap();
        write_profile(&scenario.profile_a, &ppath).unwrap();

        let domain = Arc::new(parse_domain(&dpath).unwrap());
        assert_eq!(*domain, *scenario.domain);
        let profile = parse_profile(&ppath, domain.clone()).unwrap();
        assert_eq!(profile, scenario.profile_a);

        let first = fs::read(&ppath).unwrap();
        write_profile(&profile, &ppath).unwrap();
        assert_eq!(first, fs::read(&ppath).unwrap());
        let first = fs::read(&dpath).unwrap();
        write_domain(&domain, &dpath).unwrap();
        assert_eq!(first, fs::read(&dpath).unwrap());
    }

    #[test]
    fn malformed_file_reports_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        fs::write(
            &path,
            "{\n  \"name\": \"x\",\n  \"issues\": [ {\"name\": 3} ]\n}",
        )
        .unwrap();
        let err = parse_domain(&path).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Parse { .. }));
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn continuous_issue_is_rejected() {
        let file: DomainFile = serde_json::from_str(
            r#"{"name":"c","issues":[{"name":"price","type":"continuous","values":["0"]}]}"#,
        )
        .unwrap();
        let err = file.into_domain().unwrap_err();
        assert!(err.to_string().contains("only discrete"));
        assert!(serde_json::from_str::<DomainFile>(
            r#"{"name":"c","issues":[{"name":"price","lower":0,"upper":1}]}"#
        )
        .is_err());
    }

    #[test]
    fn weight_sum_violation_names_invariant() {
        let domain = Arc::new(
            Domain::new(
                "w",
                vec![Issue::new("a", ["x", "y"]), Issue::new("b", ["z"])],
            )
            .unwrap(),
        );
        let file: ProfileFile = serde_json::from_str(
            r#"{"domain":"w","weights":[0.5,0.4],
                "evaluations":{"a":{"x":1.0,"y":0.2},"b":{"z":1.0}},
                "reservation":0.0,"discount":1.0}"#,
        )
        .unwrap();
        let err = file.into_profile(domain).unwrap_err();
        assert!(err.to_string().contains("weights must sum to 1"), "{err}");
    }

    #[test]
    fn missing_value_evaluation_is_reported() {
        let domain = Arc::new(Domain::new("w", vec![Issue::new("a", ["x", "y"])]).unwrap());
        let file: ProfileFile = serde_json::from_str(
            r#"{"domain":"w","weights":[1.0],"evaluations":{"a":{"x":1.0}},
                "reservation":0.0,"discount":1.0}"#,
        )
        .unwrap();
        let err = file.into_profile(domain).unwrap_err();
        assert!(err.to_string().contains("missing value 'y'"), "{err}");
    }
}
