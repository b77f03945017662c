//! Embedded, ordered schema migrations.
//!
//! A script is a list of directives, one per line: `create table <name>` or
//! `drop table <name>`. Blank lines and `#` comments are ignored.

#[derive(Debug, Clone, Copy)]
pub struct Migration {
    pub version: u32,
    pub name: &'static str,
    pub script: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Directive {
    CreateTable(String),
    DropTable(String),
}

pub const BUILTIN: &[Migration] = &[
    Migration {
        version: 1,
        name: "identity",
        script: include_str!("../../migrations/V0001__identity.rm"),
    },
    Migration {
        version: 2,
        name: "continuum",
        script: include_str!("../../migrations/V0002__continuum.rm"),
    },
    Migration {
        version: 3,
        name: "alerts",
        script: include_str!("../../migrations/V0003__alerts.rm"),
    },
];

pub fn parse_script(script: &str) -> Result<Vec<Directive>, String> {
    let mut out = Vec::new();
    for (n, raw) in script.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let words: Vec<&str> = line.split_whitespace().collect();
        let valid_name = |s: &str| !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
        match words.as_slice() {
            ["create", "table", name] if valid_name(name) => {
                out.push(Directive::CreateTable(name.to_string()))
            }
            ["drop", "table", name] if valid_name(name) => out.push(Directive::DropTable(name.to_string())),
            _ => return Err(format!("line {}: unrecognized directive {line:?}", n + 1)),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_scripts_parse_in_order() {
        for (i, m) in BUILTIN.iter().enumerate() {
            assert_eq!(m.version as usize, i + 1);
            assert!(!parse_script(m.script).unwrap().is_empty());
        }
    }

    #[test]
    fn rejects_unknown_directive() {
        assert!(parse_script("create table ok\nalter table x").is_err());
        assert_eq!(
            parse_script("# c\n\ndrop table t1").unwrap(),
            vec![Directive::DropTable("t1".into())]
        );
    }
}
