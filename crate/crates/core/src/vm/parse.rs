//! Assembly front end.
//!
//! Parsing runs in three passes: `include` directives are spliced textually,
//! declarations are collected with their operands still as tokens, and
//! finally names are resolved against the complete program. Reference
//! implementations of any library class the program touches are linked in
//! automatically, so the same source runs in both execution modes.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use super::program::{FunctionDef, Instruction, LibClass, Program, SourceLoc};
use super::value::Value;
use crate::conc_lib::reference_library_source;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("{loc}: {message}")]
    Syntax { loc: SourceLoc, message: String },
    #[error("{loc}: unknown label `{label}` in function `{function}`")]
    UnknownLabel {
        loc: SourceLoc,
        label: String,
        function: String,
    },
    #[error("{loc}: unknown function `{name}`")]
    UnknownFunction { loc: SourceLoc, name: String },
    #[error("{loc}: unknown global `{name}`")]
    UnknownGlobal { loc: SourceLoc, name: String },
    #[error("{loc}: unknown class `{name}`")]
    UnknownClass { loc: SourceLoc, name: String },
    #[error("{loc}: unknown constant `{name}`")]
    UnknownConstant { loc: SourceLoc, name: String },
    #[error("{loc}: duplicate {what} `{name}`")]
    Duplicate {
        loc: SourceLoc,
        what: &'static str,
        name: String,
    },
    #[error("{loc}: `{name}` expects {expected} arguments, got {got}")]
    Arity {
        loc: SourceLoc,
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("override of undeclared constant `{0}`")]
    UndeclaredOverride(String),
    #[error("{loc}: cannot include `{path}`: {reason}")]
    Include {
        loc: SourceLoc,
        path: String,
        reason: String,
    },
    #[error("program has no `main` function")]
    MissingMain,
}

/// Resolves `include` paths to source text.
pub trait SourceLoader {
    /// Returns a display name and the text for `path` as written in `from`.
    fn load(&self, path: &str, from: &str) -> Result<(String, String), String>;
}

/// Resolves includes relative to the including file, falling back to the
/// built-in reference library for `lib/reference/<class>.asm`.
#[derive(Debug, Clone, Default)]
pub struct FsLoader {
    pub base_dir: Option<PathBuf>,
}

impl SourceLoader for FsLoader {
    fn load(&self, path: &str, from: &str) -> Result<(String, String), String> {
        let dir = Path::new(from)
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .or_else(|| self.base_dir.clone())
            .unwrap_or_else(|| PathBuf::from("."));
        let candidate = dir.join(path);
        match std::fs::read_to_string(&candidate) {
            Ok(text) => Ok((candidate.display().to_string(), text)),
            Err(err) => builtin_library(path)
                .map(|(name, text)| (name.to_string(), text.to_string()))
                .ok_or_else(|| err.to_string()),
        }
    }
}

fn builtin_library(path: &str) -> Option<(&'static str, &'static str)> {
    let file = path.rsplit('/').next()?;
    let class = LibClass::from_name(file.strip_suffix(".asm")?)?;
    if !path.ends_with(&format!("lib/reference/{file}")) && path != file {
        return None;
    }
    Some((library_file_name(class), reference_library_source(class)))
}

pub(crate) fn library_file_name(class: LibClass) -> &'static str {
    match class {
        LibClass::Lock => "lib/reference/lock.asm",
        LibClass::AtomicInt => "lib/reference/atomicint.asm",
        LibClass::Map => "lib/reference/map.asm",
    }
}

/// Parses program text, resolving includes against the working directory.
pub fn parse_program(text: &str, overrides: &BTreeMap<String, i64>) -> Result<Program, ParseError> {
    parse_with_loader(text, "<input>", overrides, &FsLoader::default())
}

/// Reads and parses a program file; includes resolve relative to it.
pub fn load_program(path: &Path, overrides: &BTreeMap<String, i64>) -> Result<Program, ParseError> {
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| ParseError::Include {
        loc: SourceLoc {
            file: Arc::from("<command line>"),
            line: 0,
        },
        path: name.clone(),
        reason: e.to_string(),
    })?;
    parse_with_loader(&text, &name, overrides, &FsLoader::default())
}

pub fn parse_with_loader(
    text: &str,
    file: &str,
    overrides: &BTreeMap<String, i64>,
    loader: &dyn SourceLoader,
) -> Result<Program, ParseError> {
    let mut seen = HashSet::new();
    let mut lines = Vec::new();
    expand(text, file, loader, &mut seen, &mut lines)?;

    let mut unit = Unit::default();
    unit.collect(&lines)?;

    // Link reference implementations for every class in use that the
    // source does not already provide.
    let mut pending: Vec<LibClass> = unit.classes_used();
    let mut linked = HashSet::new();
    while let Some(class) = pending.pop() {
        if !linked.insert(class) {
            continue;
        }
        if unit.defines_function(&format!("{}.new", class.name())) {
            continue;
        }
        let name = library_file_name(class);
        if seen.contains(name) {
            continue;
        }
        let mut lib_lines = Vec::new();
        expand(reference_library_source(class), name, loader, &mut seen, &mut lib_lines)?;
        unit.collect(&lib_lines)?;
        // a library may itself use other classes
        pending.extend(unit.classes_used());
    }

    unit.resolve(overrides)
}

#[derive(Debug, Clone)]
struct Line {
    text: String,
    loc: SourceLoc,
}

fn expand(
    text: &str,
    file: &str,
    loader: &dyn SourceLoader,
    seen: &mut HashSet<String>,
    out: &mut Vec<Line>,
) -> Result<(), ParseError> {
    seen.insert(file.to_string());
    let file_name: Arc<str> = Arc::from(file);
    for (idx, raw) in text.lines().enumerate() {
        let loc = SourceLoc {
            file: file_name.clone(),
            line: idx as u32 + 1,
        };
        let stripped = raw.split(';').next().unwrap_or("").trim();
        if stripped.is_empty() {
            continue;
        }
        if let Some(path) = stripped.strip_prefix("include ") {
            let path = path.trim().trim_matches('"');
            let (name, body) = loader.load(path, file).map_err(|reason| ParseError::Include {
                loc: loc.clone(),
                path: path.to_string(),
                reason,
            })?;
            // Include-once: splicing the same file twice would only produce
            // duplicate definitions.
            if seen.contains(&name) {
                continue;
            }
            expand(&body, &name, loader, seen, out)?;
            continue;
        }
        out.push(Line {
            text: stripped.to_string(),
            loc,
        });
    }
    Ok(())
}

#[derive(Debug, Clone)]
enum Operand {
    Int(String),
    Name(String),
}

#[derive(Debug, Clone)]
struct RawInstr {
    op: String,
    args: Vec<String>,
    loc: SourceLoc,
}

#[derive(Debug, Clone)]
struct RawFunction {
    name: String,
    params: u16,
    locals: u16,
    library: bool,
    labels: HashMap<String, u32>,
    body: Vec<RawInstr>,
    loc: SourceLoc,
}

#[derive(Debug, Default)]
struct Unit {
    constants: Vec<(String, i64, SourceLoc)>,
    globals: Vec<(String, Operand, SourceLoc)>,
    functions: Vec<RawFunction>,
}

fn syntax(loc: &SourceLoc, message: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        loc: loc.clone(),
        message: message.into(),
    }
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

fn parse_int(s: &str) -> Option<i64> {
    s.parse::<i64>().ok()
}

impl Unit {
    fn defines_function(&self, name: &str) -> bool {
        self.functions.iter().any(|f| f.name == name)
    }

    fn classes_used(&self) -> Vec<LibClass> {
        let mut out = Vec::new();
        for f in &self.functions {
            for ins in &f.body {
                let class = match ins.op.as_str() {
                    "new" => ins.args.first().and_then(|c| LibClass::from_name(c)),
                    "invoke" => ins
                        .args
                        .first()
                        .and_then(|t| t.split_once('.'))
                        .and_then(|(c, _)| LibClass::from_name(c)),
                    _ => None,
                };
                if let Some(c) = class {
                    if !out.contains(&c) {
                        out.push(c);
                    }
                }
            }
        }
        out
    }

    fn collect(&mut self, lines: &[Line]) -> Result<(), ParseError> {
        let mut current: Option<RawFunction> = None;
        for line in lines {
            let text = line.text.as_str();
            let loc = &line.loc;
            if let Some(rest) = text.strip_prefix("const ") {
                let (name, value) = split_assignment(rest, loc)?;
                let value = parse_int(value)
                    .ok_or_else(|| syntax(loc, format!("constant `{name}` needs an integer value")))?;
                self.constants.push((name.to_string(), value, loc.clone()));
            } else if let Some(rest) = text.strip_prefix("global ") {
                let (name, value) = split_assignment(rest, loc)?;
                let init = if parse_int(value).is_some() {
                    Operand::Int(value.to_string())
                } else {
                    Operand::Name(value.to_string())
                };
                self.globals.push((name.to_string(), init, loc.clone()));
            } else if text.starts_with("fn ") {
                if let Some(done) = current.take() {
                    self.functions.push(done);
                }
                current = Some(parse_header(text, loc)?);
            } else if let Some(label) = text.strip_suffix(':').filter(|l| is_ident(l)) {
                let f = current
                    .as_mut()
                    .ok_or_else(|| syntax(loc, "label outside of a function"))?;
                let target = f.body.len() as u32;
                if f.labels.insert(label.to_string(), target).is_some() {
                    return Err(ParseError::Duplicate {
                        loc: loc.clone(),
                        what: "label",
                        name: label.to_string(),
                    });
                }
            } else {
                let f = current
                    .as_mut()
                    .ok_or_else(|| syntax(loc, "instruction outside of a function"))?;
                let mut parts = text.split_whitespace();
                let op = parts.next().unwrap_or_default().to_string();
                let args = parts.map(str::to_string).collect();
                f.body.push(RawInstr {
                    op,
                    args,
                    loc: loc.clone(),
                });
            }
        }
        if let Some(done) = current.take() {
            self.functions.push(done);
        }
        Ok(())
    }

    fn resolve(self, overrides: &BTreeMap<String, i64>) -> Result<Program, ParseError> {
        let mut constants = BTreeMap::new();
        for (name, value, loc) in &self.constants {
            if constants.insert(name.clone(), *value).is_some() {
                return Err(ParseError::Duplicate {
                    loc: loc.clone(),
                    what: "constant",
                    name: name.clone(),
                });
            }
        }
        for (name, value) in overrides {
            match constants.get_mut(name) {
                Some(slot) => *slot = *value,
                None => return Err(ParseError::UndeclaredOverride(name.clone())),
            }
        }

        let mut globals: Vec<(String, Operand, SourceLoc)> = self.globals;
        globals.sort_by(|a, b| a.0.cmp(&b.0));
        for pair in globals.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(ParseError::Duplicate {
                    loc: pair[1].2.clone(),
                    what: "global",
                    name: pair[1].0.clone(),
                });
            }
        }
        let mut global_names = Vec::with_capacity(globals.len());
        let mut global_inits = Vec::with_capacity(globals.len());
        for (name, init, loc) in &globals {
            let value = match init {
                Operand::Int(s) => Value::Int(parse_int(s).unwrap_or_default()),
                Operand::Name(n) if n == "nil" => Value::Nil,
                Operand::Name(n) => Value::Int(*constants.get(n).ok_or_else(|| {
                    ParseError::UnknownConstant {
                        loc: loc.clone(),
                        name: n.clone(),
                    }
                })?),
            };
            global_names.push(Arc::<str>::from(name.as_str()));
            global_inits.push(value);
        }

        let mut raw = self.functions;
        raw.sort_by(|a, b| a.name.cmp(&b.name));
        for pair in raw.windows(2) {
            if pair[0].name == pair[1].name {
                return Err(ParseError::Duplicate {
                    loc: pair[1].loc.clone(),
                    what: "function",
                    name: pair[1].name.clone(),
                });
            }
        }
        let func_index: HashMap<&str, (u32, u16)> = raw
            .iter()
            .enumerate()
            .map(|(i, f)| (f.name.as_str(), (i as u32, f.params)))
            .collect();
        let global_index: HashMap<&str, u32> = global_names
            .iter()
            .enumerate()
            .map(|(i, g)| (&**g, i as u32))
            .collect();

        let resolver = Resolver {
            constants: &constants,
            funcs: &func_index,
            globals: &global_index,
        };
        let mut functions = Vec::with_capacity(raw.len());
        for f in &raw {
            let mut code = Vec::with_capacity(f.body.len());
            let mut lines = Vec::with_capacity(f.body.len());
            for ins in &f.body {
                code.push(resolver.instruction(ins, f)?);
                lines.push(ins.loc.clone());
            }
            functions.push(FunctionDef {
                name: Arc::from(f.name.as_str()),
                params: f.params,
                locals: f.locals,
                code,
                lines,
                library: f.library,
            });
        }

        let entry = func_index.get("main").ok_or(ParseError::MissingMain)?;
        if entry.1 != 0 {
            let f = &raw[entry.0 as usize];
            return Err(syntax(&f.loc, "`main` must take no arguments"));
        }
        Ok(Program {
            constants,
            global_names,
            global_inits,
            functions,
            entry: entry.0,
        })
    }
}

fn split_assignment<'a>(rest: &'a str, loc: &SourceLoc) -> Result<(&'a str, &'a str), ParseError> {
    let (name, value) = rest
        .split_once('=')
        .ok_or_else(|| syntax(loc, "expected `name = value`"))?;
    let (name, value) = (name.trim(), value.trim());
    if !is_ident(name) {
        return Err(syntax(loc, format!("invalid name `{name}`")));
    }
    Ok((name, value))
}

/// `fn name(P args, L locals) [lib]:` or the short form `fn name:`.
fn parse_header(text: &str, loc: &SourceLoc) -> Result<RawFunction, ParseError> {
    let body = text["fn ".len()..]
        .trim()
        .strip_suffix(':')
        .ok_or_else(|| syntax(loc, "function header must end with `:`"))?
        .trim();
    let (body, library) = match body.strip_suffix("[lib]") {
        Some(b) => (b.trim(), true),
        None => (body, false),
    };
    let (name, params, locals) = match body.split_once('(') {
        None => (body, 0, 0),
        Some((name, sig)) => {
            let sig = sig
                .strip_suffix(')')
                .ok_or_else(|| syntax(loc, "unterminated parameter list"))?;
            let mut params = None;
            let mut locals = None;
            for part in sig.split(',') {
                let mut words = part.split_whitespace();
                let n = words.next().and_then(|w| w.parse::<u16>().ok());
                match (n, words.next(), words.next()) {
                    (Some(n), Some("args" | "arg"), None) => params = Some(n),
                    (Some(n), Some("locals" | "local"), None) => locals = Some(n),
                    _ => return Err(syntax(loc, format!("bad signature part `{}`", part.trim()))),
                }
            }
            let params = params.unwrap_or(0);
            (name.trim(), params, locals.unwrap_or(params))
        }
    };
    if !is_ident(name) {
        return Err(syntax(loc, format!("invalid function name `{name}`")));
    }
    if params > locals {
        return Err(syntax(
            loc,
            format!("`{name}` declares {params} args but only {locals} locals"),
        ));
    }
    Ok(RawFunction {
        name: name.to_string(),
        params,
        locals,
        library,
        labels: HashMap::new(),
        body: Vec::new(),
        loc: loc.clone(),
    })
}

struct Resolver<'a> {
    constants: &'a BTreeMap<String, i64>,
    funcs: &'a HashMap<&'a str, (u32, u16)>,
    globals: &'a HashMap<&'a str, u32>,
}

impl Resolver<'_> {
    fn int(&self, tok: &str, loc: &SourceLoc) -> Result<i64, ParseError> {
        if let Some(v) = parse_int(tok) {
            return Ok(v);
        }
        if !is_ident(tok) {
            return Err(syntax(loc, format!("expected an integer, found `{tok}`")));
        }
        self.constants
            .get(tok)
            .copied()
            .ok_or_else(|| ParseError::UnknownConstant {
                loc: loc.clone(),
                name: tok.to_string(),
            })
    }

    fn small<T: TryFrom<i64>>(&self, tok: &str, loc: &SourceLoc) -> Result<T, ParseError> {
        let v = self.int(tok, loc)?;
        T::try_from(v).map_err(|_| syntax(loc, format!("operand {v} out of range")))
    }

    fn label(&self, tok: &str, f: &RawFunction, loc: &SourceLoc) -> Result<u32, ParseError> {
        f.labels
            .get(tok)
            .copied()
            .ok_or_else(|| ParseError::UnknownLabel {
                loc: loc.clone(),
                label: tok.to_string(),
                function: f.name.clone(),
            })
    }

    fn function(&self, tok: &str, argc: u16, loc: &SourceLoc) -> Result<u32, ParseError> {
        let &(id, params) = self.funcs.get(tok).ok_or_else(|| ParseError::UnknownFunction {
            loc: loc.clone(),
            name: tok.to_string(),
        })?;
        if params != argc {
            return Err(ParseError::Arity {
                loc: loc.clone(),
                name: tok.to_string(),
                expected: params as usize,
                got: argc as usize,
            });
        }
        Ok(id)
    }

    fn global(&self, tok: &str, loc: &SourceLoc) -> Result<u32, ParseError> {
        self.globals
            .get(tok)
            .copied()
            .ok_or_else(|| ParseError::UnknownGlobal {
                loc: loc.clone(),
                name: tok.to_string(),
            })
    }

    fn class(&self, tok: &str, loc: &SourceLoc) -> Result<LibClass, ParseError> {
        LibClass::from_name(tok).ok_or_else(|| ParseError::UnknownClass {
            loc: loc.clone(),
            name: tok.to_string(),
        })
    }

    fn instruction(&self, ins: &RawInstr, f: &RawFunction) -> Result<Instruction, ParseError> {
        use Instruction as I;
        let loc = &ins.loc;
        let arity = match ins.op.as_str() {
            "push" | "load" | "store" | "jmp" | "jz" | "gload" | "gstore" | "gcas" | "newarr"
            | "new" => 1,
            "call" | "spawn" | "invoke" => 2,
            _ => 0,
        };
        if ins.args.len() != arity {
            return Err(syntax(
                loc,
                format!("`{}` takes {arity} operand(s), got {}", ins.op, ins.args.len()),
            ));
        }
        let a = |i: usize| ins.args[i].as_str();
        let out = match ins.op.as_str() {
            "push" => match a(0) {
                "nil" => I::Push(Value::Nil),
                tok => I::Push(Value::Int(self.int(tok, loc)?)),
            },
            "pop" => I::Pop,
            "dup" => I::Dup,
            "load" => I::Load(self.small(a(0), loc)?),
            "store" => I::Store(self.small(a(0), loc)?),
            "add" => I::Add,
            "sub" => I::Sub,
            "mul" => I::Mul,
            "eq" => I::Eq,
            "lt" => I::Lt,
            "not" => I::Not,
            "jmp" => I::Jmp(self.label(a(0), f, loc)?),
            "jz" => I::Jz(self.label(a(0), f, loc)?),
            "call" => {
                let argc = self.small(a(1), loc)?;
                I::Call {
                    func: self.function(a(0), argc, loc)?,
                    argc,
                }
            }
            "spawn" => {
                let argc = self.small(a(1), loc)?;
                I::Spawn {
                    func: self.function(a(0), argc, loc)?,
                    argc,
                }
            }
            "ret" => I::Ret,
            "tid" => I::Tid,
            "gload" => I::GLoad(self.global(a(0), loc)?),
            "gstore" => I::GStore(self.global(a(0), loc)?),
            "gcas" => I::GCas(self.global(a(0), loc)?),
            "newarr" => I::NewArr(self.small(a(0), loc)?),
            "aload" => I::ALoad,
            "astore" => I::AStore,
            "acas" => I::ACas,
            "new" => {
                let class = self.class(a(0), loc)?;
                let ctor = self
                    .funcs
                    .get(format!("{}.new", class.name()).as_str())
                    .filter(|&&(_, params)| params == 0)
                    .map(|&(id, _)| id);
                I::New { class, ctor }
            }
            "invoke" => {
                let (class_name, method) = a(0)
                    .split_once('.')
                    .ok_or_else(|| syntax(loc, "invoke target must be `<class>.<method>`"))?;
                let class = self.class(class_name, loc)?;
                let argc: u16 = self.small(a(1), loc)?;
                // Unknown methods of a known class parse; they fail at run
                // time as unsupported native methods.
                if let Some(expected) = class.method_arity(method) {
                    if expected != argc as usize {
                        return Err(ParseError::Arity {
                            loc: loc.clone(),
                            name: a(0).to_string(),
                            expected,
                            got: argc as usize,
                        });
                    }
                }
                let target = self
                    .funcs
                    .get(a(0))
                    .filter(|&&(_, params)| params == argc + 1)
                    .map(|&(id, _)| id);
                I::Invoke {
                    class,
                    method: Arc::from(method),
                    argc,
                    target,
                }
            }
            "join" => I::Join,
            "park" => I::Park,
            "unpark" => I::Unpark,
            "atomic_begin" => I::AtomicBegin,
            "atomic_end" => I::AtomicEnd,
            "assert" => I::Assert,
            "halt" => I::Halt,
            "illegal" => I::Illegal,
            other => return Err(syntax(loc, format!("unknown opcode `{other}`"))),
        };
        if let I::Load(slot) | I::Store(slot) = out {
            if slot >= f.locals {
                return Err(syntax(
                    loc,
                    format!("local slot {slot} out of range for `{}` ({} locals)", f.name, f.locals),
                ));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Program, ParseError> {
        parse_program(text, &BTreeMap::new())
    }

    #[test]
    fn minimal_program() {
        let p = parse("fn main:\n  halt").unwrap();
        assert_eq!(p.functions.len(), 1);
        assert!(p.global_names.is_empty());
        assert_eq!(p.function(p.entry).code, vec![Instruction::Halt]);
    }

    #[test]
    fn constant_override_is_substituted() {
        let text = "const N = 2\nfn main(0 args, 1 locals):\n  push N\n  halt\n";
        let mut ov = BTreeMap::new();
        ov.insert("N".to_string(), 5);
        let p = parse_program(text, &ov).unwrap();
        assert_eq!(p.function(p.entry).code[0], Instruction::Push(Value::Int(5)));
        assert_eq!(p.constants["N"], 5);
    }

    #[test]
    fn unknown_label_is_named() {
        let err = parse("fn main:\n  jmp missing\n").unwrap_err();
        match &err {
            ParseError::UnknownLabel { label, .. } => assert_eq!(label, "missing"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("missing"));
        assert!(err.to_string().contains(":2"));
    }

    #[test]
    fn undeclared_override_rejected() {
        let mut ov = BTreeMap::new();
        ov.insert("Q".to_string(), 1);
        assert_eq!(
            parse_program("fn main:\n halt", &ov).unwrap_err(),
            ParseError::UndeclaredOverride("Q".into())
        );
    }

    #[test]
    fn unknown_class_rejected_but_unknown_method_accepted() {
        let err = parse("fn main:\n new queue\n halt").unwrap_err();
        assert!(matches!(err, ParseError::UnknownClass { .. }));
        let p = parse("fn main(0 args, 1 locals):\n new lock\n invoke lock.foo 0\n halt").unwrap();
        let main = p.function(p.entry);
        assert!(matches!(
            &main.code[1],
            Instruction::Invoke { method, target: None, .. } if &**method == "foo"
        ));
    }

    #[test]
    fn known_method_arity_checked() {
        let err = parse("fn main:\n new lock\n invoke lock.lock 1\n halt").unwrap_err();
        assert!(matches!(err, ParseError::Arity { expected: 0, got: 1, .. }));
    }

    #[test]
    fn call_arity_and_missing_function() {
        let err = parse("fn f(1 args, 1 locals):\n ret\nfn main:\n call f 2\n halt").unwrap_err();
        assert!(matches!(err, ParseError::Arity { .. }));
        let err = parse("fn main:\n spawn nope 0\n halt").unwrap_err();
        assert!(matches!(err, ParseError::UnknownFunction { .. }));
    }

    #[test]
    fn duplicates_rejected() {
        assert!(matches!(
            parse("global g = 0\nglobal g = 1\nfn main:\n halt").unwrap_err(),
            ParseError::Duplicate { what: "global", .. }
        ));
        assert!(matches!(
            parse("fn main:\n halt\nfn main:\n halt").unwrap_err(),
            ParseError::Duplicate { what: "function", .. }
        ));
        assert!(matches!(
            parse("const A = 1\nconst A = 2\nfn main:\n halt").unwrap_err(),
            ParseError::Duplicate { what: "constant", .. }
        ));
    }

    #[test]
    fn globals_sorted_and_initialised() {
        let p = parse("global zed = nil\nconst K = 4\nglobal abc = K\nfn main:\n halt").unwrap();
        assert_eq!(&*p.global_names[0], "abc");
        assert_eq!(p.global_inits, vec![Value::Int(4), Value::Nil]);
    }

    #[test]
    fn library_classes_are_linked_automatically() {
        let p = parse("fn main(0 args, 1 locals):\n new map\n store 0\n halt").unwrap();
        assert!(p.function_id("map.put").is_some());
        assert!(p.function(p.function_id("map.put").unwrap()).library);
        assert!(!p.function(p.entry).library);
        assert!(p.function_id("lock.lock").is_none());
    }

    #[test]
    fn include_splices_library_once() {
        let text = "include lib/reference/lock.asm\ninclude lib/reference/lock.asm\n\
                    fn main(0 args, 1 locals):\n new lock\n halt";
        let p = parse(text).unwrap();
        assert!(p.function_id("lock.unlock").is_some());
    }

    #[test]
    fn missing_include_reported() {
        let err = parse("include nowhere/x.asm\nfn main:\n halt").unwrap_err();
        assert!(matches!(err, ParseError::Include { .. }));
    }

    #[test]
    fn local_slot_bounds_checked() {
        assert!(parse("fn main(0 args, 1 locals):\n load 1\n halt").is_err());
        assert!(parse("fn f(2 args, 1 locals):\n ret\nfn main:\n halt").is_err());
    }
}
