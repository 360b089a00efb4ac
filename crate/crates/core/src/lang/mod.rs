//! The Mini language: syntax, values, and the instrumented interpreter.

mod ast;
mod interp;
mod lexer;
mod parser;
mod printer;
mod value;

use std::path::Path;

use thiserror::Error;

pub use ast::*;
pub use interp::*;
pub use parser::parse;
pub use printer::{print_datum, print_expr, print_function, print_program, print_stmt};
pub use value::{deep_copy, ArrRef, Datum, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LangError {
    #[error("syntax error at {line}:{col}: {message}")]
    Syntax { line: u32, col: u32, message: String },
    #[error("unresolved name `{0}`")]
    Resolution(String),
    #[error("i/o error reading {path}: {message}")]
    Io { path: String, message: String },
}

/// Concatenates every `.mini` file of a project directory in lexicographic
/// filename order. A plain file path is read as-is.
pub fn read_project(path: &Path) -> Result<String, LangError> {
    let io = |e: std::io::Error| LangError::Io { path: path.display().to_string(), message: e.to_string() };
    if path.is_file() {
        return std::fs::read_to_string(path).map_err(io);
    }
    let mut files: Vec<_> = std::fs::read_dir(path)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "mini"))
        .collect();
    files.sort();
    let mut source = String::new();
    for f in files {
        source.push_str(&std::fs::read_to_string(&f).map_err(io)?);
        source.push('\n');
    }
    Ok(source)
}

pub fn load_project(path: &Path) -> Result<Program, LangError> {
    parse(&read_project(path)?)
}
