//! Line-oriented workload scripts. See `workloads/GRAMMAR.md` for the syntax.
//!
//! Each `thread <id> priority <p>` header opens a program; every following
//! event line belongs to it. Handle names are scoped per thread and checked
//! statically: a name must be bound by an earlier event of the same thread.

use std::collections::BTreeSet;
use std::path::Path;

use thiserror::Error;

use crate::heap::ElemKind;

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: handle `{name}` is not bound in this thread")]
    UnboundHandle { line: usize, name: String },
    #[error("reading workload: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Operand {
    Int(u64),
    Handle(String),
    Null,
}

#[derive(Debug, Clone, PartialEq)]
pub enum WorkloadEvent {
    AllocObj {
        name: String,
        size: usize,
        ref_offsets: Vec<usize>,
    },
    AllocArray {
        name: String,
        elem: ElemKind,
        n: usize,
    },
    WriteField {
        obj: String,
        offset: usize,
        value: Operand,
    },
    ReadField {
        obj: String,
        offset: usize,
        bind: Option<String>,
    },
    WriteElem {
        arr: String,
        index: usize,
        value: Operand,
    },
    ReadElem {
        arr: String,
        index: usize,
        bind: Option<String>,
    },
    DropRoot {
        name: String,
    },
    PushFrame {
        names: Vec<String>,
    },
    PopFrame,
    Compute {
        work: u64,
    },
    BlockIo {
        ticks: u64,
    },
    /// Binds `name` to a fresh `n`-element word array with probability `p`,
    /// otherwise to null.
    MaybeNoneSomeArray {
        name: String,
        n: usize,
        p: f64,
    },
}

impl WorkloadEvent {
    pub fn op_name(&self) -> &'static str {
        match self {
            WorkloadEvent::AllocObj { .. } => "alloc_obj",
            WorkloadEvent::AllocArray { .. } => "alloc_array",
            WorkloadEvent::WriteField { .. } => "write_field",
            WorkloadEvent::ReadField { .. } => "read_field",
            WorkloadEvent::WriteElem { .. } => "write_elem",
            WorkloadEvent::ReadElem { .. } => "read_elem",
            WorkloadEvent::DropRoot { .. } => "drop",
            WorkloadEvent::PushFrame { .. } => "push_frame",
            WorkloadEvent::PopFrame => "pop_frame",
            WorkloadEvent::Compute { .. } => "compute",
            WorkloadEvent::BlockIo { .. } => "block_io",
            WorkloadEvent::MaybeNoneSomeArray { .. } => "maybe_none_some_array",
        }
    }

    /// Names this event reads, in order.
    pub fn uses(&self) -> Vec<&str> {
        match self {
            WorkloadEvent::WriteField { obj, value, .. } => with_operand(obj, value),
            WorkloadEvent::WriteElem { arr, value, .. } => with_operand(arr, value),
            WorkloadEvent::ReadField { obj, .. } => vec![obj.as_str()],
            WorkloadEvent::ReadElem { arr, .. } => vec![arr.as_str()],
            WorkloadEvent::DropRoot { name } => vec![name.as_str()],
            WorkloadEvent::PushFrame { names } => names.iter().map(String::as_str).collect(),
            _ => Vec::new(),
        }
    }

    /// Name this event binds, if any.
    pub fn binds(&self) -> Option<&str> {
        match self {
            WorkloadEvent::AllocObj { name, .. }
            | WorkloadEvent::AllocArray { name, .. }
            | WorkloadEvent::MaybeNoneSomeArray { name, .. } => Some(name),
            WorkloadEvent::ReadField { bind, .. } | WorkloadEvent::ReadElem { bind, .. } => {
                bind.as_deref()
            }
            _ => None,
        }
    }
}

fn with_operand<'a>(target: &'a str, value: &'a Operand) -> Vec<&'a str> {
    match value {
        Operand::Handle(n) => vec![target, n.as_str()],
        _ => vec![target],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThreadProgram {
    pub id: u32,
    pub priority: u8,
    pub events: Vec<WorkloadEvent>,
    /// Source line of each event.
    pub lines: Vec<usize>,
}

pub fn parse_workload(path: impl AsRef<Path>) -> Result<Vec<ThreadProgram>, WorkloadError> {
    parse_str(&std::fs::read_to_string(path)?)
}

pub fn parse_str(text: &str) -> Result<Vec<ThreadProgram>, WorkloadError> {
    let mut programs: Vec<ThreadProgram> = Vec::new();
    let mut bound: BTreeSet<String> = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let toks: Vec<&str> = body.split_whitespace().collect();
        let err = |message: String| WorkloadError::Parse { line, message };
        if toks[0] == "thread" {
            let [_, id, kw, p] = toks[..] else {
                return Err(err("expected `thread <id> priority <p>`".into()));
            };
            if kw != "priority" {
                return Err(err("expected `thread <id> priority <p>`".into()));
            }
            let id = num(id, line)?;
            if programs.iter().any(|t| t.id == id) {
                return Err(err(format!("thread {id} declared twice")));
            }
            programs.push(ThreadProgram {
                id,
                priority: num(p, line)?,
                events: Vec::new(),
                lines: Vec::new(),
            });
            bound.clear();
            continue;
        }
        let Some(prog) = programs.last_mut() else {
            return Err(err("event before any thread header".into()));
        };
        let ev = parse_event(&toks, line)?;
        for name in ev.uses() {
            if !bound.contains(name) {
                return Err(WorkloadError::UnboundHandle {
                    line,
                    name: name.to_string(),
                });
            }
        }
        if let WorkloadEvent::DropRoot { name } = &ev {
            bound.remove(name);
        }
        if let Some(name) = ev.binds() {
            bound.insert(name.to_string());
        }
        prog.events.push(ev);
        prog.lines.push(line);
    }
    Ok(programs)
}

fn num<T: std::str::FromStr>(tok: &str, line: usize) -> Result<T, WorkloadError> {
    tok.parse().map_err(|_| WorkloadError::Parse {
        line,
        message: format!("expected a number, found `{tok}`"),
    })
}

fn name(tok: &str, line: usize) -> Result<String, WorkloadError> {
    let ok = tok.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && tok.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    if ok && tok != "null" {
        Ok(tok.to_string())
    } else {
        Err(WorkloadError::Parse {
            line,
            message: format!("invalid handle name `{tok}`"),
        })
    }
}

fn operand(tok: &str, line: usize) -> Result<Operand, WorkloadError> {
    if tok == "null" {
        Ok(Operand::Null)
    } else if let Some(n) = tok.strip_prefix('&') {
        Ok(Operand::Handle(name(n, line)?))
    } else {
        Ok(Operand::Int(num(tok, line)?))
    }
}

fn bind_clause(rest: &[&str], line: usize) -> Result<Option<String>, WorkloadError> {
    match rest {
        [] => Ok(None),
        ["->", n] => Ok(Some(name(n, line)?)),
        _ => Err(WorkloadError::Parse {
            line,
            message: "expected `-> <name>` or end of line".into(),
        }),
    }
}

fn parse_event(toks: &[&str], line: usize) -> Result<WorkloadEvent, WorkloadError> {
    let arity = |want: &str| WorkloadError::Parse {
        line,
        message: format!("usage: {want}"),
    };
    let ev = match toks[0] {
        "alloc_obj" => match toks[1..] {
            [n, size] | [n, size, _] => {
                let ref_offsets = match toks.get(3) {
                    None => Vec::new(),
                    Some(r) => {
                        let list = r.strip_prefix("refs=").ok_or_else(|| arity("alloc_obj <name> <size> [refs=o1,o2]"))?;
                        list.split(',')
                            .filter(|s| !s.is_empty())
                            .map(|o| num(o, line))
                            .collect::<Result<_, _>>()?
                    }
                };
                WorkloadEvent::AllocObj {
                    name: name(n, line)?,
                    size: num(size, line)?,
                    ref_offsets,
                }
            }
            _ => return Err(arity("alloc_obj <name> <size> [refs=o1,o2]")),
        },
        "alloc_array" => match toks[1..] {
            [n, elem, len] => WorkloadEvent::AllocArray {
                name: name(n, line)?,
                elem: if elem == "ref" {
                    ElemKind::Ref
                } else {
                    ElemKind::Data(num(elem, line)?)
                },
                n: num(len, line)?,
            },
            _ => return Err(arity("alloc_array <name> <elem_size|ref> <n>")),
        },
        "write_field" => match toks[1..] {
            [o, off, v] => WorkloadEvent::WriteField {
                obj: name(o, line)?,
                offset: num(off, line)?,
                value: operand(v, line)?,
            },
            _ => return Err(arity("write_field <obj> <offset> <int|&name|null>")),
        },
        "read_field" if toks.len() >= 3 => WorkloadEvent::ReadField {
            obj: name(toks[1], line)?,
            offset: num(toks[2], line)?,
            bind: bind_clause(&toks[3..], line)?,
        },
        "write_elem" => match toks[1..] {
            [a, i, v] => WorkloadEvent::WriteElem {
                arr: name(a, line)?,
                index: num(i, line)?,
                value: operand(v, line)?,
            },
            _ => return Err(arity("write_elem <arr> <index> <int|&name|null>")),
        },
        "read_elem" if toks.len() >= 3 => WorkloadEvent::ReadElem {
            arr: name(toks[1], line)?,
            index: num(toks[2], line)?,
            bind: bind_clause(&toks[3..], line)?,
        },
        "drop" => match toks[1..] {
            [n] => WorkloadEvent::DropRoot { name: name(n, line)? },
            _ => return Err(arity("drop <name>")),
        },
        "push_frame" => WorkloadEvent::PushFrame {
            names: toks[1..].iter().map(|t| name(t, line)).collect::<Result<_, _>>()?,
        },
        "pop_frame" if toks.len() == 1 => WorkloadEvent::PopFrame,
        "compute" => match toks[1..] {
            [w] => WorkloadEvent::Compute { work: num(w, line)? },
            _ => return Err(arity("compute <work>")),
        },
        "block_io" => match toks[1..] {
            [t] => WorkloadEvent::BlockIo { ticks: num(t, line)? },
            _ => return Err(arity("block_io <ticks>")),
        },
        "maybe_none_some_array" => match toks[1..] {
            [n, len, p] => {
                let p: f64 = num(p, line)?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(arity("maybe_none_some_array <name> <n> <p in [0,1]>"));
                }
                WorkloadEvent::MaybeNoneSomeArray {
                    name: name(n, line)?,
                    n: num(len, line)?,
                    p,
                }
            }
            _ => return Err(arity("maybe_none_some_array <name> <n> <p>")),
        },
        "read_field" | "read_elem" | "pop_frame" => return Err(arity(toks[0])),
        other => {
            return Err(WorkloadError::Parse {
                line,
                message: format!("unknown op `{other}`"),
            })
        }
    };
    Ok(ev)
}
