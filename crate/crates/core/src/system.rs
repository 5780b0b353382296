//! Control-affine systems `x' = f(x) + g(x) u`, `y = h(x)` and their text format.
//!
//! ```text
//! system example1
//! states x1 x2 x3
//! inputs u
//! f = [x2, x3^3, 1]
//! g = [[0], [0], [1]]
//! h = x1
//! ```
//!
//! `#` starts a comment. A statement continues over line breaks while
//! brackets or parentheses are open.

use sha2::{Digest, Sha256};

use crate::expr::{line_col, parse_inner, Expr, Func, ParseError, VarScope};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SystemError {
    #[error("syntax error at {0}")]
    Syntax(ParseError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("duplicate variable name '{0}'")]
    DuplicateName(String),
    #[error("invalid variable name '{0}'")]
    InvalidName(String),
    #[error("input '{name}' appears in {section}; f, g and h may only depend on the state")]
    InputInField { name: String, section: String },
    #[error("missing '{0}' declaration")]
    Missing(&'static str),
    #[error("'{0}' declared twice")]
    Redeclared(String),
}

#[derive(Clone, Debug)]
pub struct ControlAffineSystem {
    pub name: String,
    pub state_names: Vec<String>,
    pub input_names: Vec<String>,
    /// Drift, one entry per state.
    pub f: Vec<Expr>,
    /// Input matrix, `n` rows of `m` entries.
    pub g: Vec<Vec<Expr>>,
    pub h: Expr,
}

fn check_name(name: &str, seen: &mut Vec<String>) -> Result<(), SystemError> {
    let mut chars = name.chars();
    let ok = chars.next().is_some_and(|c| c.is_alphabetic() || c == '_')
        && chars.all(|c| c.is_alphanumeric() || c == '_')
        && Func::from_name(name).is_none();
    if !ok {
        return Err(SystemError::InvalidName(name.to_string()));
    }
    if seen.iter().any(|s| s == name) {
        return Err(SystemError::DuplicateName(name.to_string()));
    }
    seen.push(name.to_string());
    Ok(())
}

impl ControlAffineSystem {
    /// Builds and validates a system.
    pub fn new(
        name: impl Into<String>,
        state_names: Vec<String>,
        input_names: Vec<String>,
        f: Vec<Expr>,
        g: Vec<Vec<Expr>>,
        h: Expr,
    ) -> Result<Self, SystemError> {
        let (n, m) = (state_names.len(), input_names.len());
        if n == 0 {
            return Err(SystemError::Missing("states"));
        }
        if m == 0 {
            return Err(SystemError::Missing("inputs"));
        }
        let mut seen = Vec::new();
        for s in state_names.iter().chain(&input_names) {
            check_name(s, &mut seen)?;
        }
        if f.len() != n {
            return Err(SystemError::DimensionMismatch(format!("{n} states declared but f has {} entries", f.len())));
        }
        if g.len() != n {
            return Err(SystemError::DimensionMismatch(format!("{n} states declared but g has {} rows", g.len())));
        }
        for (k, row) in g.iter().enumerate() {
            if row.len() != m {
                return Err(SystemError::DimensionMismatch(format!(
                    "{m} inputs declared but row {} of g has {} entries",
                    k + 1,
                    row.len()
                )));
            }
        }
        let sys = Self { name: name.into(), state_names, input_names, f, g, h };
        let fields = sys
            .f
            .iter()
            .enumerate()
            .map(|(k, e)| (format!("f[{}]", k + 1), e))
            .chain(sys.g.iter().enumerate().flat_map(|(k, row)| {
                row.iter().enumerate().map(move |(j, e)| (format!("g[{}][{}]", k + 1, j + 1), e))
            }))
            .chain(std::iter::once(("h".to_string(), &sys.h)));
        for (section, e) in fields {
            if let Some(j) = e.max_input_index() {
                return Err(SystemError::InputInField { name: sys.input_names[j].clone(), section });
            }
            if e.max_state_index().is_some_and(|i| i >= n) {
                return Err(SystemError::DimensionMismatch(format!("{section} references an undeclared state")));
            }
        }
        Ok(sys)
    }

    pub fn n(&self) -> usize {
        self.state_names.len()
    }

    pub fn m(&self) -> usize {
        self.input_names.len()
    }

    pub fn scope(&self) -> VarScope {
        VarScope { states: self.state_names.clone(), inputs: self.input_names.clone() }
    }

    /// Column `j` of `g` as a vector field.
    pub fn g_column(&self, j: usize) -> Vec<Expr> {
        self.g.iter().map(|row| row[j].clone()).collect()
    }

    fn show(&self, e: &Expr) -> String {
        e.display(&self.state_names, &self.input_names).to_string()
    }

    /// Canonical text in the system-file format; parses back to this system.
    pub fn to_text(&self) -> String {
        let f: Vec<String> = self.f.iter().map(|e| self.show(e)).collect();
        let g: Vec<String> = self
            .g
            .iter()
            .map(|row| format!("[{}]", row.iter().map(|e| self.show(e)).collect::<Vec<_>>().join(", ")))
            .collect();
        format!(
            "system {}\nstates {}\ninputs {}\nf = [{}]\ng = [{}]\nh = {}\n",
            self.name,
            self.state_names.join(" "),
            self.input_names.join(" "),
            f.join(", "),
            g.join(", "),
            self.show(&self.h)
        )
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    /// Evaluates `f(x) + g(x) u`.
    pub fn vector_field(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>, crate::expr::EvalError> {
        let mut out = Vec::with_capacity(self.n());
        for (fi, gi) in self.f.iter().zip(&self.g) {
            let mut v = fi.evaluate(x)?;
            for (gij, uj) in gi.iter().zip(u) {
                if *uj != 0.0 {
                    v += gij.evaluate(x)? * uj;
                }
            }
            out.push(v);
        }
        Ok(out)
    }
}

/// Blanks comments so byte offsets stay aligned with the original text.
fn strip_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_comment = false;
    for c in text.chars() {
        if c == '\n' {
            in_comment = false;
            out.push('\n');
        } else if in_comment || c == '#' {
            in_comment = true;
            for _ in 0..c.len_utf8() {
                out.push(' ');
            }
        } else {
            out.push(c);
        }
    }
    out
}

struct Statement {
    keyword: String,
    /// Byte offset of the body (text after the keyword).
    body_start: usize,
    body: String,
}

fn syntax(text: &str, pos: usize, message: impl Into<String>) -> SystemError {
    let (line, column) = line_col(text, pos);
    SystemError::Syntax(ParseError { line, column, message: message.into() })
}

fn statements(clean: &str) -> Result<Vec<Statement>, SystemError> {
    let bytes = clean.as_bytes();
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        if bytes[pos].is_ascii_whitespace() {
            pos += 1;
            continue;
        }
        let kw_start = pos;
        while pos < bytes.len() && (bytes[pos].is_ascii_alphanumeric() || bytes[pos] == b'_') {
            pos += 1;
        }
        if pos == kw_start {
            return Err(syntax(clean, pos, "expected a declaration keyword"));
        }
        let keyword = clean[kw_start..pos].to_string();
        let body_start = pos;
        let mut depth: i64 = 0;
        while pos < bytes.len() {
            match bytes[pos] {
                b'(' | b'[' => depth += 1,
                b')' | b']' => depth -= 1,
                b'\n' if depth <= 0 => break,
                _ => {}
            }
            pos += 1;
        }
        out.push(Statement { keyword, body_start, body: clean[body_start..pos].to_string() });
    }
    Ok(out)
}

/// Splits `[a, b, ...]` at top-level commas, returning (offset, text) pieces
/// relative to the start of `s`.
fn split_list(s: &str, base: usize, full: &str) -> Result<Vec<(usize, String)>, SystemError> {
    let trimmed_start = s.len() - s.trim_start().len();
    let t = s.trim();
    if !t.starts_with('[') {
        return Err(syntax(full, base + trimmed_start, "expected '['"));
    }
    if !t.ends_with(']') {
        return Err(syntax(full, base + trimmed_start + t.len(), "expected ']' to close the list"));
    }
    let inner_start = trimmed_start + 1;
    let inner = &t[1..t.len() - 1];
    let mut items = Vec::new();
    let mut depth = 0i64;
    let mut start = 0;
    for (k, c) in inner.char_indices() {
        match c {
            '(' | '[' => depth += 1,
            ')' | ']' => depth -= 1,
            ',' if depth == 0 => {
                items.push((base + inner_start + start, inner[start..k].to_string()));
                start = k + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(syntax(full, base + trimmed_start, "unbalanced brackets"));
    }
    if !inner[start..].trim().is_empty() || !items.is_empty() {
        items.push((base + inner_start + start, inner[start..].to_string()));
    }
    Ok(items)
}

fn parse_at(text: &str, offset: usize, full: &str, scope: &VarScope) -> Result<Expr, SystemError> {
    parse_inner(text, scope).map_err(|(p, msg)| syntax(full, offset + p, msg))
}

fn body_after_eq(st: &Statement, full: &str) -> Result<(usize, String), SystemError> {
    let lead = st.body.len() - st.body.trim_start().len();
    let t = st.body.trim_start();
    match t.strip_prefix('=') {
        Some(rest) => Ok((st.body_start + lead + 1, rest.to_string())),
        None => Err(syntax(full, st.body_start + lead, format!("expected '=' after '{}'", st.keyword))),
    }
}

/// Parses a system file.
pub fn parse_system(text: &str) -> Result<ControlAffineSystem, SystemError> {
    let clean = strip_comments(text);
    let stmts = statements(&clean)?;

    let mut name: Option<String> = None;
    let mut states: Option<Vec<String>> = None;
    let mut inputs: Option<Vec<String>> = None;
    let mut bodies: [Option<(usize, String)>; 3] = [None, None, None];

    for st in &stmts {
        let words = || st.body.split_whitespace().map(str::to_string).collect::<Vec<_>>();
        match st.keyword.as_str() {
            "system" => {
                if name.replace(st.body.trim().to_string()).is_some() {
                    return Err(SystemError::Redeclared("system".into()));
                }
            }
            "states" => {
                if states.replace(words()).is_some() {
                    return Err(SystemError::Redeclared("states".into()));
                }
            }
            "inputs" => {
                if inputs.replace(words()).is_some() {
                    return Err(SystemError::Redeclared("inputs".into()));
                }
            }
            kw @ ("f" | "g" | "h") => {
                let slot = ["f", "g", "h"].iter().position(|k| *k == kw).unwrap();
                if bodies[slot].replace(body_after_eq(st, &clean)?).is_some() {
                    return Err(SystemError::Redeclared(kw.into()));
                }
            }
            other => {
                let pos = st.body_start - other.len();
                return Err(syntax(&clean, pos, format!("unknown declaration '{other}'")));
            }
        }
    }

    let states = states.ok_or(SystemError::Missing("states"))?;
    let inputs = inputs.ok_or(SystemError::Missing("inputs"))?;
    let mut seen = Vec::new();
    for s in states.iter().chain(&inputs) {
        check_name(s, &mut seen)?;
    }
    let scope = VarScope { states: states.clone(), inputs: inputs.clone() };
    let [fb, gb, hb] = bodies;
    let (f_off, f_text) = fb.ok_or(SystemError::Missing("f"))?;
    let (g_off, g_text) = gb.ok_or(SystemError::Missing("g"))?;
    let (h_off, h_text) = hb.ok_or(SystemError::Missing("h"))?;

    let f = split_list(&f_text, f_off, &clean)?
        .into_iter()
        .map(|(o, s)| parse_at(&s, o, &clean, &scope))
        .collect::<Result<Vec<_>, _>>()?;

    let rows = split_list(&g_text, g_off, &clean)?;
    let mut g = Vec::with_capacity(rows.len());
    for (o, row) in rows {
        if row.trim_start().starts_with('[') {
            let entries = split_list(&row, o, &clean)?
                .into_iter()
                .map(|(o2, s)| parse_at(&s, o2, &clean, &scope))
                .collect::<Result<Vec<_>, _>>()?;
            g.push(entries);
        } else {
            // single-input shorthand: g = [g1, ..., gn]
            g.push(vec![parse_at(&row, o, &clean, &scope)?]);
        }
    }

    let h = parse_at(&h_text, h_off, &clean, &scope)?;
    ControlAffineSystem::new(name.unwrap_or_else(|| "unnamed".into()), states, inputs, f, g, h)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EX1: &str = "system example1\nstates x1 x2 x3\ninputs u\nf = [x2, x3^3, 1]\ng = [[0],[0],[1]]\nh = x1\n";

    #[test]
    fn example_one_dimensions() {
        let sys = parse_system(EX1).unwrap();
        assert_eq!((sys.n(), sys.m()), (3, 1));
        assert_eq!(sys.f[1].to_string(), "x3^3");
        assert!(sys.g[2][0].is_one());
    }

    #[test]
    fn example_two_with_comments_and_continuation() {
        let text = "# Example 2\nsystem ex2\nstates x1 x2 x3\ninputs u # one input\nf = [x2,\n     x3^3*x1,\n     1]\ng = [[0], [0], [1]]\nh = x1\n";
        let sys = parse_system(text).unwrap();
        assert_eq!((sys.n(), sys.m()), (3, 1));
        assert_eq!(sys.f[1].to_string(), "x3^3*x1");
    }

    #[test]
    fn dimension_mismatch() {
        let text = EX1.replace("f = [x2, x3^3, 1]", "f = [x2, x3^3]");
        assert!(matches!(parse_system(&text), Err(SystemError::DimensionMismatch(_))));
        let text = EX1.replace("g = [[0],[0],[1]]", "g = [[0],[0],[1, 2]]");
        assert!(matches!(parse_system(&text), Err(SystemError::DimensionMismatch(_))));
    }

    #[test]
    fn duplicate_names() {
        let text = EX1.replace("states x1 x2 x3", "states x1 x2 x1");
        assert_eq!(parse_system(&text).unwrap_err(), SystemError::DuplicateName("x1".into()));
        let text = EX1.replace("inputs u", "inputs x2");
        assert_eq!(parse_system(&text).unwrap_err(), SystemError::DuplicateName("x2".into()));
    }

    #[test]
    fn input_in_drift_is_rejected() {
        let text = EX1.replace("f = [x2, x3^3, 1]", "f = [x2, x3^3*u, 1]");
        assert!(matches!(parse_system(&text), Err(SystemError::InputInField { .. })));
    }

    #[test]
    fn syntax_error_position_in_file() {
        let text = EX1.replace("h = x1", "h = x1 +");
        match parse_system(&text) {
            Err(SystemError::Syntax(e)) => assert_eq!(e.line, 6),
            other => panic!("{other:?}"),
        }
        let text = EX1.replace("f = [x2, x3^3, 1]", "f = [x2, x3^^3, 1]");
        match parse_system(&text) {
            Err(SystemError::Syntax(e)) => assert_eq!((e.line, e.column), (4, 13)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn single_input_shorthand_and_missing_sections() {
        let text = EX1.replace("g = [[0],[0],[1]]", "g = [0, 0, 1]");
        assert_eq!(parse_system(&text).unwrap().m(), 1);
        let text = EX1.replace("h = x1\n", "");
        assert_eq!(parse_system(&text).unwrap_err(), SystemError::Missing("h"));
    }

    #[test]
    fn canonical_text_round_trips() {
        let sys = parse_system(EX1).unwrap();
        let again = parse_system(&sys.to_text()).unwrap();
        assert_eq!(sys.to_text(), again.to_text());
        assert_eq!(sys.hash(), again.hash());
        assert_eq!(sys.hash().len(), 64);
    }
}
