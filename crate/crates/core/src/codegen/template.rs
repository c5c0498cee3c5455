//! Minimal `{{name}}` substitution for backend templates.
//!
//! A placeholder that is alone on its line expands to a block: every line of
//! the value is prefixed with the placeholder's indentation, and an empty
//! value removes the line. Anywhere else the value is inserted verbatim.

use super::CodegenError;

fn placeholder_at(s: &str) -> Option<(&str, usize)> {
    let rest = s.strip_prefix("{{")?;
    let end = rest.find("}}")?;
    let name = &rest[..end];
    let valid = !name.is_empty() && name.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_');
    valid.then_some((name, end + 4))
}

fn lookup<'v>(template: &str, vars: &[(&str, &'v str)], name: &str) -> Result<&'v str, CodegenError> {
    vars.iter()
        .find(|(k, _)| *k == name)
        .map(|(_, v)| *v)
        .ok_or_else(|| CodegenError::UnknownPlaceholder { template: template.to_string(), name: name.to_string() })
}

/// Renders `text` (the template called `template`, for error messages).
pub fn render(template: &str, text: &str, vars: &[(&str, &str)]) -> Result<String, CodegenError> {
    let mut out = String::with_capacity(text.len() * 2);
    let mut first = true;
    for line in text.split('\n') {
        let trimmed = line.trim_start();
        let indent = &line[..line.len() - trimmed.len()];
        if let Some((name, len)) = placeholder_at(trimmed) {
            if len == trimmed.trim_end().len() {
                let value = lookup(template, vars, name)?;
                if value.is_empty() {
                    continue;
                }
                for value_line in value.split('\n') {
                    if !first {
                        out.push('\n');
                    }
                    first = false;
                    if !value_line.is_empty() {
                        out.push_str(indent);
                        out.push_str(value_line);
                    }
                }
                continue;
            }
        }
        if !first {
            out.push('\n');
        }
        first = false;
        let mut rest = line;
        while let Some(pos) = rest.find("{{") {
            out.push_str(&rest[..pos]);
            match placeholder_at(&rest[pos..]) {
                Some((name, len)) => {
                    out.push_str(lookup(template, vars, name)?);
                    rest = &rest[pos + len..];
                }
                None => {
                    out.push_str("{{");
                    rest = &rest[pos + 2..];
                }
            }
        }
        out.push_str(rest);
    }
    Ok(out)
}

/// Names of all placeholders used by a template, in order of appearance.
pub fn placeholders(text: &str) -> Vec<&str> {
    let mut names = Vec::new();
    let mut rest = text;
    while let Some(pos) = rest.find("{{") {
        match placeholder_at(&rest[pos..]) {
            Some((name, len)) => {
                names.push(name);
                rest = &rest[pos + len..];
            }
            None => rest = &rest[pos + 2..],
        }
    }
    names
}
