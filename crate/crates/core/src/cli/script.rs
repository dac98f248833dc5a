//! Line-oriented protocol scripts.
//!
//! One command per line, `#` starts a comment. Arguments are `key=value` tokens separated by
//! whitespace; values never contain spaces. Parsing is purely syntactic: labels are resolved
//! against the network when the script is bound (see [`super::bind`]).

use num_complex::Complex64;
use std::fmt;

use crate::protocols::Separation;
use crate::walkops::ShiftKind;

/// Syntax error at a 1-based line and column.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.col, self.message)
    }
}

impl std::error::Error for ParseError {}

/// Gate named in the library, or an explicit matrix given column by column.
#[derive(Clone, Debug, PartialEq)]
pub enum GateSpec {
    Named(String),
    /// Columns of the matrix, each a list of entries top to bottom.
    Columns(Vec<Vec<Complex64>>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitValue {
    Zero,
    One,
    Plus,
    Minus,
    Amplitudes([Complex64; 2]),
    /// Haar-random single-qubit state drawn from the run's seeded generator.
    Random,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultipathBranch {
    pub path: Vec<String>,
    pub target: String,
    pub gate: GateSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StepCommand {
    CoinPerm {
        walker: usize,
        node: String,
        c1: String,
        c2: String,
    },
    CoinBlock {
        walker: usize,
        node: String,
        coins: Vec<String>,
        gate: GateSpec,
    },
    DataCtrl {
        walker: usize,
        node: String,
        controls: Vec<String>,
        string: String,
        c1: String,
        c2: String,
    },
    Interact {
        node: String,
        control: usize,
        coin: String,
        target: usize,
        c1: String,
        c2: String,
    },
    Shift {
        kind: ShiftKind,
        walkers: Option<Vec<usize>>,
    },
    Measure {
        walker: usize,
        a: String,
        b: String,
        correct: String,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Command {
    Network(String),
    Walkers(usize),
    Init(Vec<(String, InitValue)>),
    /// Expected gate for the reference computation; controls default to firing on 1.
    Oracle {
        controls: Vec<String>,
        string: Option<String>,
        targets: Vec<String>,
        gate: GateSpec,
    },
    RemoteCu {
        control: String,
        target: String,
        path: Vec<String>,
        gate: GateSpec,
        separation: Separation,
        hops: Vec<(String, GateSpec)>,
    },
    RemoteMcu {
        controls: Vec<String>,
        string: String,
        targets: Vec<String>,
        path: Vec<String>,
        gate: GateSpec,
        separation: Separation,
    },
    Multipath {
        controls: Vec<String>,
        string: Option<String>,
        branches: Vec<MultipathBranch>,
    },
    Tree {
        controls: Vec<String>,
        string: Option<String>,
        root: String,
        edges: Vec<(String, String)>,
        targets: Vec<(Vec<String>, GateSpec)>,
    },
    GhzPath {
        paths: Vec<(Vec<String>, Vec<String>)>,
    },
    Linklevel {
        pairs: Option<Vec<(String, String)>>,
    },
    /// Starting position of a walker for the low-level steps that follow.
    Walker {
        walker: usize,
        node: String,
        coin: Option<String>,
    },
    Step(StepCommand),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Line {
    pub line: usize,
    pub command: Command,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Script {
    pub lines: Vec<Line>,
}

impl Script {
    pub fn commands(&self) -> impl Iterator<Item = &Command> {
        self.lines.iter().map(|l| &l.command)
    }

    /// Same commands in the same order, ignoring line positions.
    pub fn equivalent(&self, other: &Script) -> bool {
        self.commands().eq(other.commands())
    }

    /// Canonical text; parsing it yields an equivalent script.
    pub fn to_text(&self) -> String {
        self.commands().map(|c| format!("{}\n", command_text(c))).collect()
    }
}

struct Token<'a> {
    text: &'a str,
    col: usize,
}

struct Cursor<'a> {
    line: usize,
    tokens: Vec<Token<'a>>,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, col: usize, message: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line,
            col,
            message: message.into(),
        }
    }

    fn end_col(&self) -> usize {
        self.tokens.last().map(|t| t.col + t.text.len()).unwrap_or(1)
    }

    fn next_word(&mut self, what: &str) -> Result<&'a str, ParseError> {
        match self.tokens.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(t.text)
            }
            None => Err(self.err(self.end_col(), format!("expected {what}"))),
        }
    }

    fn col(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map(|t| t.col)
            .unwrap_or_else(|| self.end_col())
    }

    fn int(&mut self, what: &str) -> Result<usize, ParseError> {
        let col = self.col();
        let w = self.next_word(what)?;
        w.parse()
            .map_err(|_| self.err(col, format!("expected {what}, found `{w}`")))
    }

    /// Remaining tokens as `(key, value, column of value)`.
    fn pairs(&mut self) -> Result<Vec<(&'a str, &'a str, usize)>, ParseError> {
        let mut out = Vec::new();
        while let Some(t) = self.tokens.get(self.pos) {
            let (k, v) = t
                .text
                .split_once('=')
                .ok_or_else(|| self.err(t.col, format!("expected key=value, found `{}`", t.text)))?;
            if k.is_empty() || v.is_empty() {
                return Err(self.err(t.col, format!("empty key or value in `{}`", t.text)));
            }
            out.push((k, v, t.col + k.len() + 1));
            self.pos += 1;
        }
        Ok(out)
    }
}

/// Key/value arguments of one command, with positional lookup for repeated keys.
struct Args<'a> {
    line: usize,
    end_col: usize,
    items: Vec<(&'a str, &'a str, usize)>,
    used: Vec<bool>,
}

impl<'a> Args<'a> {
    fn new(c: &mut Cursor<'a>) -> Result<Self, ParseError> {
        let items = c.pairs()?;
        Ok(Args {
            line: c.line,
            end_col: c.end_col(),
            used: vec![false; items.len()],
            items,
        })
    }

    fn err(&self, col: usize, message: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line,
            col,
            message: message.into(),
        }
    }

    fn opt(&mut self, key: &str) -> Result<Option<(&'a str, usize)>, ParseError> {
        let mut found = None;
        for (i, &(k, v, col)) in self.items.iter().enumerate() {
            if k == key {
                if found.is_some() {
                    return Err(self.err(col, format!("`{key}` given twice")));
                }
                found = Some((v, col));
                self.used[i] = true;
            }
        }
        Ok(found)
    }

    fn req(&mut self, key: &str) -> Result<(&'a str, usize), ParseError> {
        self.opt(key)?
            .ok_or_else(|| self.err(self.end_col, format!("missing `{key}=`")))
    }

    /// All occurrences of any of `keys`, in order.
    fn repeated(&mut self, keys: &[&str]) -> Vec<(&'a str, &'a str, usize)> {
        let mut out = Vec::new();
        for (i, &(k, v, col)) in self.items.iter().enumerate() {
            if keys.contains(&k) {
                out.push((k, v, col));
                self.used[i] = true;
            }
        }
        out
    }

    fn finish(self) -> Result<(), ParseError> {
        match self.items.iter().zip(&self.used).find(|(_, u)| !**u) {
            Some(((k, _, col), _)) => Err(self.err(col - k.len() - 1, format!("unexpected argument `{k}`"))),
            None => Ok(()),
        }
    }

    fn int(&mut self, key: &str) -> Result<usize, ParseError> {
        let (v, col) = self.req(key)?;
        v.parse()
            .map_err(|_| self.err(col, format!("`{key}` must be a nonnegative integer")))
    }

    /// `controls=`, or its singular spelling `control=`.
    fn controls(&mut self) -> Result<Vec<String>, ParseError> {
        match (self.opt("controls")?, self.opt("control")?) {
            (Some(_), Some((_, col))) => Err(self.err(col, "give either `controls=` or `control=`")),
            (Some((v, col)), None) | (None, Some((v, col))) => split_list(v).map_err(|m| self.err(col, m)),
            (None, None) => Err(self.err(self.end_col, "missing `controls=`")),
        }
    }

    fn list(&mut self, key: &str) -> Result<Vec<String>, ParseError> {
        let (v, col) = self.req(key)?;
        split_list(v).map_err(|m| self.err(col, m))
    }

    fn gate(&mut self, key: &str) -> Result<GateSpec, ParseError> {
        let (v, col) = self.req(key)?;
        parse_gate(v).map_err(|m| self.err(col, m))
    }

    fn separation(&mut self) -> Result<Separation, ParseError> {
        match self.opt("separation")? {
            None | Some(("reverse", _)) => Ok(Separation::Reverse),
            Some(("measure", _)) => Ok(Separation::Measure),
            Some((v, col)) => Err(self.err(col, format!("unknown separation `{v}`"))),
        }
    }

    fn string(&mut self) -> Result<Option<String>, ParseError> {
        match self.opt("string")? {
            None => Ok(None),
            Some((v, col)) => {
                if v.chars().all(|c| c == '0' || c == '1') {
                    Ok(Some(v.to_string()))
                } else {
                    Err(self.err(col, "`string` must consist of 0 and 1"))
                }
            }
        }
    }
}

fn split_list(v: &str) -> Result<Vec<String>, String> {
    let items: Vec<String> = v.split(',').map(str::to_string).collect();
    if items.iter().any(String::is_empty) {
        return Err(format!("empty item in list `{v}`"));
    }
    Ok(items)
}

fn parse_number(s: &str) -> Result<f64, String> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| format!("`{s}` is not a number"))
}

/// `X|Y|Z|H|S|T|I` or `U[re,im,re,im;re,im,re,im]` (one `;`-separated group per column).
pub fn parse_gate(v: &str) -> Result<GateSpec, String> {
    if let Some(body) = v.strip_prefix("U[").and_then(|b| b.strip_suffix(']')) {
        let mut cols = Vec::new();
        for col in body.split(';') {
            let nums = col.split(',').map(parse_number).collect::<Result<Vec<_>, _>>()?;
            if nums.len() % 2 != 0 {
                return Err("matrix entries come in re,im pairs".into());
            }
            cols.push(nums.chunks(2).map(|p| Complex64::new(p[0], p[1])).collect::<Vec<_>>());
        }
        let n = cols.len();
        if !n.is_power_of_two() || n < 2 || cols.iter().any(|c| c.len() != n) {
            return Err(format!("`{v}` is not a square matrix of size 2^n"));
        }
        return Ok(GateSpec::Columns(cols));
    }
    match v {
        "I" | "X" | "Y" | "Z" | "H" | "S" | "T" => Ok(GateSpec::Named(v.to_string())),
        _ => Err(format!("unknown gate `{v}`")),
    }
}

fn parse_init(v: &str) -> Result<InitValue, String> {
    Ok(match v {
        "zero" => InitValue::Zero,
        "one" => InitValue::One,
        "plus" => InitValue::Plus,
        "minus" => InitValue::Minus,
        "random" => InitValue::Random,
        _ => {
            let nums = v.split(',').map(parse_number).collect::<Result<Vec<_>, _>>()?;
            if nums.len() != 4 {
                return Err(format!("`{v}`: expected zero|one|plus|minus|random or re,im,re,im"));
            }
            InitValue::Amplitudes([Complex64::new(nums[0], nums[1]), Complex64::new(nums[2], nums[3])])
        }
    })
}

fn parse_pair(v: &str, sep: char) -> Result<(String, String), String> {
    match v.split_once(sep) {
        Some((a, b)) if !a.is_empty() && !b.is_empty() => Ok((a.to_string(), b.to_string())),
        _ => Err(format!("`{v}` is not of the form x{sep}y")),
    }
}

fn parse_pairs(v: &str, sep: char) -> Result<Vec<(String, String)>, String> {
    split_list(v)?.iter().map(|p| parse_pair(p, sep)).collect()
}

fn parse_step(c: &mut Cursor<'_>) -> Result<StepCommand, ParseError> {
    let col = c.col();
    let kind = c.next_word("step kind")?;
    if kind == "shift" {
        let col = c.col();
        let k = match c.next_word("flipflop or identity")? {
            "flipflop" => ShiftKind::Flipflop,
            "identity" => ShiftKind::Identity,
            other => return Err(c.err(col, format!("unknown shift `{other}`"))),
        };
        let mut a = Args::new(c)?;
        let walkers = match a.opt("walkers")? {
            None => None,
            Some((v, col)) => Some(
                split_list(v)
                    .and_then(|l| {
                        l.iter()
                            .map(|w| w.parse::<usize>().map_err(|_| format!("bad walker `{w}`")))
                            .collect()
                    })
                    .map_err(|m| a.err(col, m))?,
            ),
        };
        a.finish()?;
        return Ok(StepCommand::Shift { kind: k, walkers });
    }
    let mut a = Args::new(c)?;
    let s = |a: &mut Args<'_>, k: &str| a.req(k).map(|(v, _)| v.to_string());
    let cmd = match kind {
        "coinperm" => StepCommand::CoinPerm {
            walker: a.int("walker")?,
            node: s(&mut a, "node")?,
            c1: s(&mut a, "c1")?,
            c2: s(&mut a, "c2")?,
        },
        "coinblock" => StepCommand::CoinBlock {
            walker: a.int("walker")?,
            node: s(&mut a, "node")?,
            coins: a.list("coins")?,
            gate: a.gate("gate")?,
        },
        "datactrl" => {
            let walker = a.int("walker")?;
            let node = s(&mut a, "node")?;
            let controls = a.list("controls")?;
            let string = a.string()?.unwrap_or_else(|| "1".repeat(controls.len()));
            StepCommand::DataCtrl {
                walker,
                node,
                controls,
                string,
                c1: s(&mut a, "c1")?,
                c2: s(&mut a, "c2")?,
            }
        }
        "interact" => StepCommand::Interact {
            node: s(&mut a, "node")?,
            control: a.int("control")?,
            coin: s(&mut a, "coin")?,
            target: a.int("target")?,
            c1: s(&mut a, "c1")?,
            c2: s(&mut a, "c2")?,
        },
        "measure" => StepCommand::Measure {
            walker: a.int("walker")?,
            a: s(&mut a, "a")?,
            b: s(&mut a, "b")?,
            correct: s(&mut a, "correct")?,
        },
        other => return Err(c.err(col, format!("unknown step `{other}`"))),
    };
    a.finish()?;
    Ok(cmd)
}

fn parse_line(c: &mut Cursor<'_>) -> Result<Command, ParseError> {
    let col = c.col();
    let name = c.next_word("command")?;
    let cmd = match name {
        "network" => {
            let path = c.next_word("network file")?.to_string();
            Command::Network(path)
        }
        "walkers" => Command::Walkers(c.int("walker count")?),
        "walker" => {
            let walker = c.int("walker index")?;
            let node = c.next_word("node")?.to_string();
            let coin = if c.pos < c.tokens.len() {
                Some(c.next_word("coin")?.to_string())
            } else {
                None
            };
            Command::Walker { walker, node, coin }
        }
        "step" => return parse_step(c).map(Command::Step),
        "init" => {
            let mut a = Args::new(c)?;
            let mut items = Vec::new();
            for (k, v, col) in std::mem::take(&mut a.items) {
                items.push((k.to_string(), parse_init(v).map_err(|m| a.err(col, m))?));
            }
            if items.is_empty() {
                return Err(c.err(col, "init needs at least one qubit=value"));
            }
            return Ok(Command::Init(items));
        }
        _ => {
            let mut a = Args::new(c)?;
            let cmd = parse_keyed(name, col, &mut a, c)?;
            a.finish()?;
            return Ok(cmd);
        }
    };
    if c.pos < c.tokens.len() {
        return Err(c.err(c.col(), "unexpected trailing token"));
    }
    Ok(cmd)
}

fn parse_keyed(name: &str, col: usize, a: &mut Args<'_>, c: &Cursor<'_>) -> Result<Command, ParseError> {
    Ok(match name {
        "oracle" => {
            let controls = match a.opt("controls")?.or(a.opt("control")?) {
                Some((v, col)) => split_list(v).map_err(|m| a.err(col, m))?,
                None => Vec::new(),
            };
            let string = a.string()?;
            let targets = match a.opt("targets")?.or(a.opt("target")?) {
                Some((v, col)) => split_list(v).map_err(|m| a.err(col, m))?,
                None => return Err(a.err(a.end_col, "missing `target=`")),
            };
            Command::Oracle {
                controls,
                string,
                targets,
                gate: a.gate("gate")?,
            }
        }
        "remote_cu" => {
            let mut hops = Vec::new();
            for (_, v, col) in a.repeated(&["hop"]) {
                let (q, g) = parse_pair(v, ':').map_err(|m| a.err(col, m))?;
                hops.push((q, parse_gate(&g).map_err(|m| a.err(col, m))?));
            }
            Command::RemoteCu {
                control: a.req("control")?.0.to_string(),
                target: a.req("target")?.0.to_string(),
                path: a.list("path")?,
                gate: a.gate("gate")?,
                separation: a.separation()?,
                hops,
            }
        }
        "remote_mcu" => {
            let controls = a.controls()?;
            let string = a.string()?.unwrap_or_else(|| "1".repeat(controls.len()));
            let targets = match a.opt("targets")?.or(a.opt("target")?) {
                Some((v, col)) => split_list(v).map_err(|m| a.err(col, m))?,
                None => return Err(a.err(a.end_col, "missing `target=`")),
            };
            Command::RemoteMcu {
                controls,
                string,
                targets,
                path: a.list("path")?,
                gate: a.gate("gate")?,
                separation: a.separation()?,
            }
        }
        "multipath" => {
            let controls = a.controls()?;
            let string = a.string()?;
            type Group = (Option<Vec<String>>, Option<String>, Option<GateSpec>, usize);
            let mut branches: Vec<Group> = Vec::new();
            for (k, v, col) in a.repeated(&["path", "target", "gate"]) {
                match k {
                    "path" => branches.push((Some(split_list(v).map_err(|m| a.err(col, m))?), None, None, col)),
                    _ => {
                        let b = branches
                            .last_mut()
                            .ok_or_else(|| a.err(col, format!("`{k}=` before the first `path=`")))?;
                        if k == "target" && b.1.is_none() {
                            b.1 = Some(v.to_string());
                        } else if k == "gate" && b.2.is_none() {
                            b.2 = Some(parse_gate(v).map_err(|m| a.err(col, m))?);
                        } else {
                            return Err(a.err(col, format!("`{k}=` given twice for one path")));
                        }
                    }
                }
            }
            if branches.is_empty() {
                return Err(a.err(a.end_col, "missing `path=`"));
            }
            let branches = branches
                .into_iter()
                .map(|(p, t, g, col)| match (p, t, g) {
                    (Some(path), Some(target), Some(gate)) => Ok(MultipathBranch { path, target, gate }),
                    _ => Err(a.err(col, "each path needs a target= and a gate=")),
                })
                .collect::<Result<Vec<_>, _>>()?;
            Command::Multipath {
                controls,
                string,
                branches,
            }
        }
        "tree" => {
            let controls = a.controls()?;
            let string = a.string()?;
            let root = a.req("root")?.0.to_string();
            let (ev, ecol) = a.req("edges")?;
            let edges = parse_pairs(ev, '>').map_err(|m| a.err(ecol, m))?;
            let mut targets: Vec<(Vec<String>, Option<GateSpec>)> = Vec::new();
            for (k, v, col) in a.repeated(&["target", "gate"]) {
                if k == "target" {
                    targets.push((split_list(v).map_err(|m| a.err(col, m))?, None));
                } else {
                    match targets.last_mut() {
                        Some((_, g @ None)) => *g = Some(parse_gate(v).map_err(|m| a.err(col, m))?),
                        _ => return Err(a.err(col, "`gate=` must follow its `target=`")),
                    }
                }
            }
            let targets = targets
                .into_iter()
                .map(|(t, g)| g.map(|g| (t, g)).ok_or_else(|| a.err(a.end_col, "target without gate")))
                .collect::<Result<Vec<_>, _>>()?;
            Command::Tree {
                controls,
                string,
                root,
                edges,
                targets,
            }
        }
        "ghz_path" => {
            let mut paths: Vec<(Vec<String>, Option<Vec<String>>)> = Vec::new();
            for (k, v, col) in a.repeated(&["path", "qubits"]) {
                let list = split_list(v).map_err(|m| a.err(col, m))?;
                if k == "path" {
                    paths.push((list, None));
                } else {
                    match paths.last_mut() {
                        Some((_, q @ None)) => *q = Some(list),
                        _ => return Err(a.err(col, "`qubits=` must follow its `path=`")),
                    }
                }
            }
            if paths.is_empty() {
                return Err(a.err(a.end_col, "missing `path=`"));
            }
            let paths = paths
                .into_iter()
                .map(|(p, q)| q.map(|q| (p, q)).ok_or_else(|| a.err(a.end_col, "path without qubits")))
                .collect::<Result<Vec<_>, _>>()?;
            Command::GhzPath { paths }
        }
        "linklevel" => {
            let pairs = match a.opt("pairs")? {
                None => None,
                Some((v, col)) => Some(parse_pairs(v, '-').map_err(|m| a.err(col, m))?),
            };
            Command::Linklevel { pairs }
        }
        other => return Err(c.err(col, format!("unknown command `{other}`"))),
    })
}

/// Parses script text; the first error is reported with its line and column.
pub fn parse_script(text: &str) -> Result<Script, ParseError> {
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("");
        let mut tokens = Vec::new();
        let mut start = None;
        for (j, ch) in content.char_indices().chain(std::iter::once((content.len(), ' '))) {
            match (ch.is_whitespace(), start) {
                (false, None) => start = Some(j),
                (true, Some(s)) => {
                    tokens.push(Token {
                        text: &content[s..j],
                        col: content[..s].chars().count() + 1,
                    });
                    start = None;
                }
                _ => {}
            }
        }
        if tokens.is_empty() {
            continue;
        }
        let mut c = Cursor {
            line: i + 1,
            tokens,
            pos: 0,
        };
        lines.push(Line {
            line: i + 1,
            command: parse_line(&mut c)?,
        });
    }
    Ok(Script { lines })
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn gate_text(g: &GateSpec) -> String {
    match g {
        GateSpec::Named(n) => n.clone(),
        GateSpec::Columns(cols) => {
            let body: Vec<String> = cols
                .iter()
                .map(|c| {
                    c.iter()
                        .map(|z| format!("{},{}", num(z.re), num(z.im)))
                        .collect::<Vec<_>>()
                        .join(",")
                })
                .collect();
            format!("U[{}]", body.join(";"))
        }
    }
}

fn init_text(v: &InitValue) -> String {
    match v {
        InitValue::Zero => "zero".into(),
        InitValue::One => "one".into(),
        InitValue::Plus => "plus".into(),
        InitValue::Minus => "minus".into(),
        InitValue::Random => "random".into(),
        InitValue::Amplitudes([a, b]) => format!("{},{},{},{}", num(a.re), num(a.im), num(b.re), num(b.im)),
    }
}

fn sep_text(s: Separation) -> &'static str {
    match s {
        Separation::Reverse => "reverse",
        Separation::Measure => "measure",
    }
}

fn command_text(c: &Command) -> String {
    let string_arg = |s: &Option<String>| s.as_ref().map(|s| format!(" string={s}")).unwrap_or_default();
    match c {
        Command::Network(p) => format!("network {p}"),
        Command::Walkers(k) => format!("walkers {k}"),
        Command::Init(items) => {
            let parts: Vec<String> = items.iter().map(|(q, v)| format!("{q}={}", init_text(v))).collect();
            format!("init {}", parts.join(" "))
        }
        Command::Oracle {
            controls,
            string,
            targets,
            gate,
        } => {
            let ctrl = if controls.is_empty() {
                String::new()
            } else {
                format!(" controls={}", controls.join(","))
            };
            format!(
                "oracle{ctrl}{} targets={} gate={}",
                string_arg(string),
                targets.join(","),
                gate_text(gate)
            )
        }
        Command::RemoteCu {
            control,
            target,
            path,
            gate,
            separation,
            hops,
        } => {
            let hops: String = hops.iter().map(|(q, g)| format!(" hop={q}:{}", gate_text(g))).collect();
            format!(
                "remote_cu control={control} target={target} path={} gate={} separation={}{hops}",
                path.join(","),
                gate_text(gate),
                sep_text(*separation)
            )
        }
        Command::RemoteMcu {
            controls,
            string,
            targets,
            path,
            gate,
            separation,
        } => format!(
            "remote_mcu controls={} string={string} targets={} path={} gate={} separation={}",
            controls.join(","),
            targets.join(","),
            path.join(","),
            gate_text(gate),
            sep_text(*separation)
        ),
        Command::Multipath {
            controls,
            string,
            branches,
        } => {
            let groups: String = branches
                .iter()
                .map(|b| {
                    format!(
                        " path={} target={} gate={}",
                        b.path.join(","),
                        b.target,
                        gate_text(&b.gate)
                    )
                })
                .collect();
            format!(
                "multipath controls={}{}{groups}",
                controls.join(","),
                string_arg(string)
            )
        }
        Command::Tree {
            controls,
            string,
            root,
            edges,
            targets,
        } => {
            let edges: Vec<String> = edges.iter().map(|(p, c)| format!("{p}>{c}")).collect();
            let targets: String = targets
                .iter()
                .map(|(t, g)| format!(" target={} gate={}", t.join(","), gate_text(g)))
                .collect();
            format!(
                "tree controls={}{} root={root} edges={}{targets}",
                controls.join(","),
                string_arg(string),
                edges.join(",")
            )
        }
        Command::GhzPath { paths } => {
            let groups: Vec<String> = paths
                .iter()
                .map(|(p, q)| format!("path={} qubits={}", p.join(","), q.join(",")))
                .collect();
            format!("ghz_path {}", groups.join(" "))
        }
        Command::Linklevel { pairs } => match pairs {
            None => "linklevel".into(),
            Some(p) => {
                let p: Vec<String> = p.iter().map(|(a, b)| format!("{a}-{b}")).collect();
                format!("linklevel pairs={}", p.join(","))
            }
        },
        Command::Walker { walker, node, coin } => match coin {
            Some(c) => format!("walker {walker} {node} {c}"),
            None => format!("walker {walker} {node}"),
        },
        Command::Step(s) => format!("step {}", step_text(s)),
    }
}

fn step_text(s: &StepCommand) -> String {
    match s {
        StepCommand::CoinPerm { walker, node, c1, c2 } => {
            format!("coinperm walker={walker} node={node} c1={c1} c2={c2}")
        }
        StepCommand::CoinBlock {
            walker,
            node,
            coins,
            gate,
        } => format!(
            "coinblock walker={walker} node={node} coins={} gate={}",
            coins.join(","),
            gate_text(gate)
        ),
        StepCommand::DataCtrl {
            walker,
            node,
            controls,
            string,
            c1,
            c2,
        } => format!(
            "datactrl walker={walker} node={node} controls={} string={string} c1={c1} c2={c2}",
            controls.join(",")
        ),
        StepCommand::Interact {
            node,
            control,
            coin,
            target,
            c1,
            c2,
        } => format!("interact node={node} control={control} coin={coin} target={target} c1={c1} c2={c2}"),
        StepCommand::Shift { kind, walkers } => {
            let k = match kind {
                ShiftKind::Flipflop => "flipflop",
                ShiftKind::Identity => "identity",
            };
            match walkers {
                Some(w) => {
                    let w: Vec<String> = w.iter().map(usize::to_string).collect();
                    format!("shift {k} walkers={}", w.join(","))
                }
                None => format!("shift {k}"),
            }
        }
        StepCommand::Measure { walker, a, b, correct } => {
            format!("measure walker={walker} a={a} b={b} correct={correct}")
        }
    }
}
