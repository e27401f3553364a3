//! Versioned prompt pools: 3 generator, 2 analyzer, and 3 refiner
//! templates, identified by stable `(role, index)` pairs so genomes stay
//! meaningful across runs.
//!
//! A template asset is a plain-text file with the system prompt first, a
//! `===USER===` delimiter line, then the user-prompt template. User
//! templates may reference `{{problem}}`, `{{code}}`, `{{traceback}}`, and
//! `{{analysis_section}}`; the analysis section renders to nothing when no
//! analyzer ran, never to placeholder residue. Templates are validated at
//! load time: unknown placeholders and missing role-required placeholders
//! are errors.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::genome::NodeRole;

const DELIMITER: &str = "===USER===";

const BUILTIN: [(&str, &str); 8] = [
    ("generator-0.txt", include_str!("../../assets/prompts/generator-0.txt")),
    ("generator-1.txt", include_str!("../../assets/prompts/generator-1.txt")),
    ("generator-2.txt", include_str!("../../assets/prompts/generator-2.txt")),
    ("analyzer-0.txt", include_str!("../../assets/prompts/analyzer-0.txt")),
    ("analyzer-1.txt", include_str!("../../assets/prompts/analyzer-1.txt")),
    ("refiner-0.txt", include_str!("../../assets/prompts/refiner-0.txt")),
    ("refiner-1.txt", include_str!("../../assets/prompts/refiner-1.txt")),
    ("refiner-2.txt", include_str!("../../assets/prompts/refiner-2.txt")),
];

/// Values available for substitution. Which ones are required depends on
/// the role being rendered; `analysis` is always optional.
#[derive(Debug, Clone, Copy, Default)]
pub struct Slots<'a> {
    pub problem: Option<&'a str>,
    pub code: Option<&'a str>,
    pub traceback: Option<&'a str>,
    pub analysis: Option<&'a str>,
}

#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub role: NodeRole,
    pub index: usize,
    pub system: String,
    pub user: String,
    /// Short content hash identifying the template version.
    pub version_hash: String,
}

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("prompt asset `{file}`: {detail}")]
    Malformed { file: String, detail: String },
    #[error("prompt asset `{file}`: unknown placeholder `{{{{{name}}}}}`")]
    UnknownPlaceholder { file: String, name: String },
    #[error("prompt asset `{file}`: missing required placeholder `{{{{{name}}}}}`")]
    MissingPlaceholder { file: String, name: String },
    #[error("no {role} template with index {index}")]
    UnknownIndex { role: NodeRole, index: usize },
    #[error("missing required slot `{slot}` for {role} template")]
    MissingSlot { role: NodeRole, slot: String },
    #[error("failed to read prompt asset: {0}")]
    Io(String),
}

/// The full prompt pool, with fixed sizes per role.
#[derive(Debug, Clone)]
pub struct PromptPool {
    generator: Vec<PromptTemplate>,
    analyzer: Vec<PromptTemplate>,
    refiner: Vec<PromptTemplate>,
}

impl PromptPool {
    /// The templates shipped with the crate.
    pub fn builtin() -> Self {
        let mut assets = Vec::new();
        for (name, content) in BUILTIN {
            assets.push((name.to_string(), content.to_string()));
        }
        Self::from_assets(assets).expect("builtin prompt assets are valid")
    }

    /// Loads a pool from a directory holding one file per `(role, index)`:
    /// `generator-0.txt` .. `generator-2.txt`, `analyzer-0.txt` ..
    /// `analyzer-1.txt`, `refiner-0.txt` .. `refiner-2.txt`.
    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut assets = Vec::new();
        for role in [NodeRole::Generator, NodeRole::Analyzer, NodeRole::Refiner] {
            for index in 0..role.prompt_pool_size() {
                let name = format!("{role}-{index}.txt");
                let content = std::fs::read_to_string(dir.join(&name))
                    .map_err(|e| TemplateError::Io(format!("{}: {e}", dir.join(&name).display())))?;
                assets.push((name, content));
            }
        }
        Self::from_assets(assets)
    }

    fn from_assets(assets: Vec<(String, String)>) -> Result<Self, TemplateError> {
        let mut pool = PromptPool {
            generator: Vec::new(),
            analyzer: Vec::new(),
            refiner: Vec::new(),
        };
        for (name, content) in assets {
            let (role, index) = parse_asset_name(&name)?;
            let template = parse_template(role, index, &name, &content)?;
            match role {
                NodeRole::Generator => pool.generator.push(template),
                NodeRole::Analyzer => pool.analyzer.push(template),
                NodeRole::Refiner => pool.refiner.push(template),
            }
        }
        for (role, list) in [
            (NodeRole::Generator, &mut pool.generator),
            (NodeRole::Analyzer, &mut pool.analyzer),
            (NodeRole::Refiner, &mut pool.refiner),
        ] {
            list.sort_by_key(|t| t.index);
            let expected = role.prompt_pool_size();
            let indices: Vec<usize> = list.iter().map(|t| t.index).collect();
            if indices != (0..expected).collect::<Vec<_>>() {
                return Err(TemplateError::Malformed {
                    file: format!("{role} pool"),
                    detail: format!("expected indices 0..{expected}, found {indices:?}"),
                });
            }
        }
        Ok(pool)
    }

    pub fn template(&self, role: NodeRole, index: usize) -> Result<&PromptTemplate, TemplateError> {
        let list = match role {
            NodeRole::Generator => &self.generator,
            NodeRole::Analyzer => &self.analyzer,
            NodeRole::Refiner => &self.refiner,
        };
        list.get(index)
            .ok_or(TemplateError::UnknownIndex { role, index })
    }

    pub fn templates(&self, role: NodeRole) -> &[PromptTemplate] {
        match role {
            NodeRole::Generator => &self.generator,
            NodeRole::Analyzer => &self.analyzer,
            NodeRole::Refiner => &self.refiner,
        }
    }

    /// Renders `(system_prompt, user_prompt)` for one node invocation.
    /// Substitution is deterministic; a missing required slot is an error
    /// naming the slot, and a missing optional analysis renders as an
    /// absent section.
    pub fn render(
        &self,
        role: NodeRole,
        index: usize,
        slots: &Slots<'_>,
    ) -> Result<(String, String), TemplateError> {
        let template = self.template(role, index)?;
        let mut user = template.user.clone();

        let required: &[(&str, Option<&str>)] = &[
            ("problem", slots.problem),
            ("code", slots.code),
            ("traceback", slots.traceback),
        ];
        for (name, value) in required {
            let placeholder = format!("{{{{{name}}}}}");
            if user.contains(&placeholder) {
                let value = value.ok_or_else(|| TemplateError::MissingSlot {
                    role,
                    slot: name.to_string(),
                })?;
                user = user.replace(&placeholder, value);
            }
        }

        let analysis_section = match slots.analysis {
            Some(analysis) if !analysis.trim().is_empty() => {
                let mut section = String::new();
                let _ = write!(section, "Analysis of the failure:\n{analysis}");
                section
            }
            _ => String::new(),
        };
        user = user.replace("{{analysis_section}}", &analysis_section);

        debug_assert!(
            !user.contains("{{"),
            "placeholder residue after substitution"
        );
        Ok((template.system.clone(), user.trim_end().to_string() + "\n"))
    }
}

fn parse_asset_name(name: &str) -> Result<(NodeRole, usize), TemplateError> {
    let stem = name.strip_suffix(".txt").unwrap_or(name);
    let (role_str, index_str) = stem.rsplit_once('-').ok_or_else(|| TemplateError::Malformed {
        file: name.to_string(),
        detail: "expected <role>-<index>.txt".into(),
    })?;
    let role = match role_str {
        "generator" => NodeRole::Generator,
        "analyzer" => NodeRole::Analyzer,
        "refiner" => NodeRole::Refiner,
        other => {
            return Err(TemplateError::Malformed {
                file: name.to_string(),
                detail: format!("unknown role `{other}`"),
            })
        }
    };
    let index = index_str.parse().map_err(|_| TemplateError::Malformed {
        file: name.to_string(),
        detail: format!("bad index `{index_str}`"),
    })?;
    Ok((role, index))
}

fn parse_template(
    role: NodeRole,
    index: usize,
    file: &str,
    content: &str,
) -> Result<PromptTemplate, TemplateError> {
    let Some((system, user)) = content.split_once(DELIMITER) else {
        return Err(TemplateError::Malformed {
            file: file.to_string(),
            detail: format!("missing `{DELIMITER}` delimiter"),
        });
    };
    let system = system.trim().to_string();
    let user = user.trim_start_matches('\n').trim_end().to_string();
    if system.is_empty() || user.is_empty() {
        return Err(TemplateError::Malformed {
            file: file.to_string(),
            detail: "empty system or user section".into(),
        });
    }

    let allowed: &[&str] = match role {
        NodeRole::Generator => &["problem"],
        NodeRole::Analyzer => &["code", "traceback"],
        NodeRole::Refiner => &["problem", "code", "traceback", "analysis_section"],
    };
    for name in placeholders(&user) {
        if !allowed.contains(&name.as_str()) {
            return Err(TemplateError::UnknownPlaceholder {
                file: file.to_string(),
                name,
            });
        }
    }
    let required: &[&str] = match role {
        NodeRole::Generator => &["problem"],
        NodeRole::Analyzer => &["code", "traceback"],
        NodeRole::Refiner => &["problem", "code", "traceback"],
    };
    for name in required {
        if !user.contains(&format!("{{{{{name}}}}}")) {
            return Err(TemplateError::MissingPlaceholder {
                file: file.to_string(),
                name: name.to_string(),
            });
        }
    }

    let mut hasher = Sha256::new();
    hasher.update(content.as_bytes());
    let version_hash = hex_prefix(&hasher.finalize(), 12);

    Ok(PromptTemplate {
        role,
        index,
        system,
        user,
        version_hash,
    })
}

fn placeholders(text: &str) -> Vec<String> {
    let mut found = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        rest = &rest[start + 2..];
        if let Some(end) = rest.find("}}") {
            found.push(rest[..end].to_string());
            rest = &rest[end + 2..];
        } else {
            break;
        }
    }
    found
}

fn hex_prefix(bytes: &[u8], chars: usize) -> String {
    let mut s = String::new();
    for b in bytes {
        let _ = write!(s, "{b:02x}");
        if s.len() >= chars {
            break;
        }
    }
    s.truncate(chars);
    s
}
