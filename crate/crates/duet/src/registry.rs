//! Prompt registry: the shipped templates plus operator overrides loaded
//! from a directory of front-matter files:
//!
//! ```text
//! ---
//! id: my_cue
//! role: cue
//! ---
//! template body with {placeholders}
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use duet_core::template::{
    builtin_templates, render_template, PromptTemplate, TemplateError, TemplateRole,
};

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("template {0:?} not found in the registry")]
    UnknownTemplate(String),
    #[error("{path}: {message}")]
    BadFile { path: String, message: String },
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[derive(Debug, Clone)]
pub struct PromptRegistry {
    templates: BTreeMap<String, PromptTemplate>,
}

impl PromptRegistry {
    /// Just the shipped templates.
    pub fn builtin() -> Self {
        let templates = builtin_templates()
            .into_iter()
            .map(|t| (t.id.clone(), t))
            .collect();
        PromptRegistry { templates }
    }

    /// Shipped templates overlaid with every template file in `dir`.
    pub fn with_dir(dir: &Path) -> Result<Self, RegistryError> {
        let mut registry = PromptRegistry::builtin();
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.is_file())
            .collect();
        paths.sort();
        for path in paths {
            let text = std::fs::read_to_string(&path)?;
            let template = parse_front_matter(&text).map_err(|message| RegistryError::BadFile {
                path: path.display().to_string(),
                message,
            })?;
            registry.templates.insert(template.id.clone(), template);
        }
        Ok(registry)
    }

    pub fn get(&self, id: &str) -> Result<&PromptTemplate, RegistryError> {
        self.templates
            .get(id)
            .ok_or_else(|| RegistryError::UnknownTemplate(id.to_string()))
    }

    pub fn render(&self, id: &str, vars: &BTreeMap<String, String>) -> Result<String, RegistryError> {
        Ok(render_template(self.get(id)?, vars)?)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    /// First template with the given role (registry order).
    pub fn first_with_role(&self, role: TemplateRole) -> Option<&PromptTemplate> {
        self.templates.values().find(|t| t.role == role)
    }
}

fn parse_front_matter(text: &str) -> Result<PromptTemplate, String> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("---") {
        return Err("missing opening --- front-matter fence".into());
    }
    let mut id = None;
    let mut role = None;
    for line in lines.by_ref() {
        let trimmed = line.trim();
        if trimmed == "---" {
            let body_start = text
                .match_indices("---")
                .nth(1)
                .map(|(i, _)| i + 3)
                .ok_or("missing closing --- fence")?;
            let body = text[body_start..].trim_start_matches(['\r', '\n']).trim_end();
            let id: String = id.ok_or("front matter missing id")?;
            let role_str: String = role.ok_or("front matter missing role")?;
            let role = TemplateRole::parse(&role_str)
                .ok_or_else(|| format!("unknown role {role_str:?}"))?;
            return PromptTemplate::new(id, role, body).map_err(|e| e.to_string());
        }
        if let Some((key, value)) = trimmed.split_once(':') {
            match key.trim() {
                "id" => id = Some(value.trim().to_string()),
                "role" => role = Some(value.trim().to_string()),
                _ => {}
            }
        }
    }
    Err("missing closing --- fence".into())
}
