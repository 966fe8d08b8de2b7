//! Structural validation of emitted filesets.
//!
//! The generators write a narrow, line-oriented Verilog subset: one
//! declaration or statement per line, named instantiation ports, sized
//! literals. This checker re-parses that subset and verifies three global
//! properties without an external simulator: every `module` is balanced by
//! an `endmodule`, every referenced identifier is declared in its module,
//! and every instantiation connects each port of a module defined in the
//! same fileset exactly once.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::FileSet;

#[derive(Debug, Error)]
pub enum CheckError {
    #[error("{file}:{line}: endmodule without an open module")]
    StrayEndmodule { file: String, line: usize },
    #[error("{file}: module {module} is never closed")]
    UnbalancedModule { file: String, module: String },
    #[error("{file}:{line}: statement outside any module")]
    OutsideModule { file: String, line: usize },
    #[error("{file}:{line}: cannot parse {text:?} here")]
    MalformedLine { file: String, line: usize, text: String },
    #[error("module {module} is defined in both {first} and {second}")]
    DuplicateModule { module: String, first: String, second: String },
    #[error("{file}: module {module} references undeclared identifier {name}")]
    UndeclaredIdentifier { file: String, module: String, name: String },
    #[error("{file}: instance {instance} refers to undefined module {module}")]
    UnknownModule { file: String, instance: String, module: String },
    #[error(
        "{file}: instance {instance} connects {found} ports, {module} declares {expected}"
    )]
    PortCountMismatch {
        file: String,
        instance: String,
        module: String,
        expected: usize,
        found: usize,
    },
    #[error("{file}: instance {instance} connects {port}, which {module} does not declare")]
    UnknownPort { file: String, instance: String, module: String, port: String },
    #[error("{file}: instance {instance} connects port {port} twice")]
    DuplicatePort { file: String, instance: String, port: String },
}

/// Verifies the structural invariants of a set of generated files; the set
/// must be closed (testbenches are checked together with their RTL).
pub fn check_fileset(files: &FileSet) -> Result<(), CheckError> {
    let mut modules: BTreeMap<String, ModuleInfo> = BTreeMap::new();
    for (file, text) in files {
        parse_file(file, text, &mut modules)?;
    }
    for (name, info) in &modules {
        for reference in &info.referenced {
            if !info.declared.contains(reference) {
                return Err(CheckError::UndeclaredIdentifier {
                    file: info.file.clone(),
                    module: name.clone(),
                    name: reference.clone(),
                });
            }
        }
        for instance in &info.instances {
            let Some(def) = modules.get(&instance.module) else {
                return Err(CheckError::UnknownModule {
                    file: info.file.clone(),
                    instance: instance.name.clone(),
                    module: instance.module.clone(),
                });
            };
            if instance.ports.len() != def.ports.len() {
                return Err(CheckError::PortCountMismatch {
                    file: info.file.clone(),
                    instance: instance.name.clone(),
                    module: instance.module.clone(),
                    expected: def.ports.len(),
                    found: instance.ports.len(),
                });
            }
            let mut seen = BTreeSet::new();
            for port in &instance.ports {
                if !seen.insert(port.clone()) {
                    return Err(CheckError::DuplicatePort {
                        file: info.file.clone(),
                        instance: instance.name.clone(),
                        port: port.clone(),
                    });
                }
                if !def.ports.contains(port) {
                    return Err(CheckError::UnknownPort {
                        file: info.file.clone(),
                        instance: instance.name.clone(),
                        module: instance.module.clone(),
                        port: port.clone(),
                    });
                }
            }
        }
    }
    Ok(())
}

struct ModuleInfo {
    file: String,
    ports: Vec<String>,
    declared: BTreeSet<String>,
    referenced: BTreeSet<String>,
    instances: Vec<Instance>,
}

struct Instance {
    name: String,
    module: String,
    ports: Vec<String>,
}

enum State {
    Outside,
    /// Collecting the port list of the named module.
    Header(String),
    /// Inside the body of the named module.
    Body(String),
    /// Inside an instantiation in the named module's body.
    Ports(String, Instance),
}

const KEYWORDS: &[&str] = &[
    "always", "assign", "begin", "case", "casex", "casez", "default", "else", "end",
    "endcase", "endmodule", "forever", "if", "initial", "inout", "input", "integer",
    "localparam", "module", "negedge", "output", "parameter", "posedge", "reg", "repeat",
    "signed", "while", "wire",
];

fn is_keyword(word: &str) -> bool {
    KEYWORDS.binary_search(&word).is_ok()
}

/// Identifiers on a line, skipping comments, strings, sized and plain
/// numeric literals, system tasks, and delays.
fn identifiers(line: &str) -> Vec<String> {
    let chars: Vec<char> = line.chars().collect();
    let mut ids = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            break;
        }
        if c == '"' {
            i += 1;
            while i < chars.len() && chars[i] != '"' {
                i += 1;
            }
            i += 1;
        } else if c == '$' {
            i += 1;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
        } else if c.is_ascii_digit() {
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '_') {
                i += 1;
            }
            if i < chars.len() && chars[i] == '\'' {
                // Sized literal: width 'base digits, possibly signed.
                i += 1;
                if matches!(chars.get(i), Some('s') | Some('S')) {
                    i += 1;
                }
                i += 1;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_')
                {
                    i += 1;
                }
            }
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            ids.push(chars[start..i].iter().collect());
        } else {
            i += 1;
        }
    }
    ids
}

fn names(line: &str) -> Vec<String> {
    identifiers(line)
        .into_iter()
        .filter(|id| !is_keyword(id))
        .collect()
}

fn parse_file(
    file: &str,
    text: &str,
    modules: &mut BTreeMap<String, ModuleInfo>,
) -> Result<(), CheckError> {
    let mut state = State::Outside;
    for (index, raw) in text.lines().enumerate() {
        let line = index + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('`') || trimmed.starts_with("//") {
            continue;
        }
        let malformed = || CheckError::MalformedLine {
            file: file.to_string(),
            line,
            text: trimmed.to_string(),
        };
        state = match state {
            State::Outside => {
                let ids = identifiers(trimmed);
                if ids.first().map(String::as_str) != Some("module") {
                    return Err(CheckError::OutsideModule { file: file.to_string(), line });
                }
                let name = ids.get(1).cloned().ok_or_else(malformed)?;
                if let Some(previous) = modules.get(&name) {
                    return Err(CheckError::DuplicateModule {
                        module: name,
                        first: previous.file.clone(),
                        second: file.to_string(),
                    });
                }
                modules.insert(
                    name.clone(),
                    ModuleInfo {
                        file: file.to_string(),
                        ports: Vec::new(),
                        declared: BTreeSet::new(),
                        referenced: BTreeSet::new(),
                        instances: Vec::new(),
                    },
                );
                if trimmed.ends_with('(') {
                    State::Header(name)
                } else if trimmed.ends_with(';') {
                    State::Body(name)
                } else {
                    return Err(malformed());
                }
            }
            State::Header(name) => {
                if trimmed == ");" {
                    State::Body(name)
                } else {
                    let ports = names(trimmed);
                    if ports.len() != 1 {
                        return Err(malformed());
                    }
                    let info = modules.get_mut(&name).expect("module was just inserted");
                    info.ports.push(ports[0].clone());
                    info.declared.insert(ports[0].clone());
                    State::Header(name)
                }
            }
            State::Body(name) => {
                if trimmed == "endmodule" {
                    State::Outside
                } else {
                    let ids = identifiers(trimmed);
                    let first = ids.first().map(String::as_str);
                    let info = modules.get_mut(&name).expect("module is open");
                    match first {
                        Some("endmodule") => return Err(malformed()),
                        Some("module") => {
                            return Err(CheckError::UnbalancedModule {
                                file: file.to_string(),
                                module: name,
                            });
                        }
                        Some("wire") | Some("reg") | Some("localparam")
                        | Some("parameter") | Some("integer") => {
                            let mut rest = names(trimmed).into_iter();
                            let declared = rest.next().ok_or_else(malformed)?;
                            info.declared.insert(declared);
                            info.referenced.extend(rest);
                            State::Body(name)
                        }
                        Some(word) if !is_keyword(word) && trimmed.ends_with('(') => {
                            let parts = names(trimmed);
                            if parts.len() != 2 {
                                return Err(malformed());
                            }
                            let instance = Instance {
                                module: parts[0].clone(),
                                name: parts[1].clone(),
                                ports: Vec::new(),
                            };
                            State::Ports(name, instance)
                        }
                        _ => {
                            info.referenced.extend(names(trimmed));
                            State::Body(name)
                        }
                    }
                }
            }
            State::Ports(name, mut instance) => {
                if trimmed == ");" {
                    let info = modules.get_mut(&name).expect("module is open");
                    info.instances.push(instance);
                    State::Body(name)
                } else if let Some(rest) = trimmed.strip_prefix('.') {
                    let mut ids = names(rest).into_iter();
                    let port = ids.next().ok_or_else(malformed)?;
                    instance.ports.push(port);
                    let info = modules.get_mut(&name).expect("module is open");
                    info.referenced.extend(ids);
                    State::Ports(name, instance)
                } else {
                    return Err(malformed());
                }
            }
        };
    }
    if let State::Header(name) | State::Body(name) | State::Ports(name, _) = state {
        return Err(CheckError::UnbalancedModule { file: file.to_string(), module: name });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fileset(pairs: &[(&str, &str)]) -> FileSet {
        pairs
            .iter()
            .map(|(name, text)| (name.to_string(), text.to_string()))
            .collect()
    }

    const CHILD: &str = "module child (\n  input wire a,\n  output wire b\n);\n  assign b = a;\nendmodule\n";

    #[test]
    fn a_valid_pair_of_modules_passes() {
        let parent = "module parent (\n  input wire x,\n  output wire y\n);\n  wire t;\n  child u1 (\n    .a(x),\n    .b(t)\n  );\n  assign y = t;\nendmodule\n";
        let files = fileset(&[("rtl/child.v", CHILD), ("rtl/parent.v", parent)]);
        check_fileset(&files).unwrap();
    }

    #[test]
    fn undeclared_identifiers_are_reported() {
        let bad = "module m (\n  output wire y\n);\n  assign y = ghost;\nendmodule\n";
        let files = fileset(&[("rtl/m.v", bad)]);
        let err = check_fileset(&files).unwrap_err();
        assert!(
            matches!(err, CheckError::UndeclaredIdentifier { ref name, .. } if name == "ghost"),
            "{err}"
        );
    }

    #[test]
    fn unbalanced_modules_are_reported() {
        let bad = "module m (\n  input wire a\n);\n  wire t;\n";
        let files = fileset(&[("rtl/m.v", bad)]);
        let err = check_fileset(&files).unwrap_err();
        assert!(matches!(err, CheckError::UnbalancedModule { .. }), "{err}");
    }

    #[test]
    fn port_count_and_name_mismatches_are_reported() {
        let short = "module p (\n  input wire x\n);\n  child u1 (\n    .a(x)\n  );\nendmodule\n";
        let files = fileset(&[("rtl/child.v", CHILD), ("rtl/p.v", short)]);
        let err = check_fileset(&files).unwrap_err();
        assert!(matches!(err, CheckError::PortCountMismatch { expected: 2, found: 1, .. }), "{err}");

        let wrong = "module p (\n  input wire x\n);\n  wire t;\n  child u1 (\n    .a(x),\n    .c(t)\n  );\nendmodule\n";
        let files = fileset(&[("rtl/child.v", CHILD), ("rtl/p.v", wrong)]);
        let err = check_fileset(&files).unwrap_err();
        assert!(matches!(err, CheckError::UnknownPort { ref port, .. } if port == "c"), "{err}");
    }

    #[test]
    fn instantiating_an_undefined_module_fails() {
        let orphan = "module p (\n  input wire x\n);\n  ghost u1 (\n    .a(x)\n  );\nendmodule\n";
        let files = fileset(&[("rtl/p.v", orphan)]);
        let err = check_fileset(&files).unwrap_err();
        assert!(matches!(err, CheckError::UnknownModule { ref module, .. } if module == "ghost"), "{err}");
    }

    #[test]
    fn literals_strings_and_system_tasks_are_not_identifiers() {
        let tb = "module tb;\n  reg clk;\n  integer errors;\n  always #5 clk = ~clk;\n  initial begin\n    errors = 0;\n    if (clk !== 1'b0) begin\n      errors = errors + 1;\n      $display(\"FAIL got %0d\", clk);\n    end\n    $finish;\n  end\nendmodule\n";
        let files = fileset(&[("tb/tb.v", tb)]);
        check_fileset(&files).unwrap();
    }

    #[test]
    fn duplicate_definitions_are_reported() {
        let files = fileset(&[("rtl/a.v", CHILD), ("rtl/b.v", CHILD)]);
        let err = check_fileset(&files).unwrap_err();
        assert!(matches!(err, CheckError::DuplicateModule { .. }), "{err}");
    }
}
