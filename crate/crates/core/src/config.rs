//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # comment
//! n = 10
//! policy = fbs(1)
//! channel = renewal(on=geometric(0.4), off=table(0.5, 0.5))
//! arrivals = mm2(0.1, 0.2, [0.9, 0.1], [0.5, 0.3, 0.2])
//! ```

use std::collections::HashMap;
use std::fmt;

use crate::arrivals::ArrivalProcess;
use crate::channel::ChannelSpec;
use crate::dist::DiscretePositiveDist;
use crate::policies::{PolicySpec, Scheduler};
use crate::sim::{default_sample_gap, default_warmup, SimConfig};

pub const KEYS: [&str; 10] = [
    "n",
    "horizon",
    "warmup",
    "sample_gap",
    "policy",
    "channel",
    "arrivals",
    "seed",
    "replications",
    "b_max",
];

/// Slots simulated after warmup when `horizon` is not given.
pub const DEFAULT_RUN_SLOTS: u64 = 200_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// 1-based line, or 0 for problems not tied to one line.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "config: {}", self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lines: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        f.write_str(&lines.join("\n"))
    }
}

impl std::error::Error for ConfigErrors {}

/// Parsed term such as `fbs(1)` or `renewal(on=geometric(0.4), off=...)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Number(f64),
    List(Vec<f64>),
    Call {
        name: String,
        args: Vec<(Option<String>, Value)>,
    },
}

struct Lexer<'a> {
    s: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(s: &'a str) -> Self {
        Self { s: s.as_bytes(), pos: 0 }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), String> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(format!("expected '{}' at column {}", c as char, self.pos + 1))
        }
    }

    fn take_while(&mut self, f: impl Fn(u8) -> bool) -> &'a str {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len() && f(self.s[self.pos]) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.s[start..self.pos]).expect("ascii slice")
    }

    fn number(&mut self) -> Result<f64, String> {
        let col = self.pos + 1;
        let tok = self.take_while(|c| c.is_ascii_digit() || matches!(c, b'.' | b'-' | b'+' | b'e' | b'E'));
        tok.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("expected a number at column {col}, found '{tok}'"))
    }

    fn value(&mut self) -> Result<Value, String> {
        match self.peek() {
            Some(b'[') => {
                self.pos += 1;
                let mut items = Vec::new();
                if !self.eat(b']') {
                    loop {
                        items.push(self.number()?);
                        if self.eat(b']') {
                            break;
                        }
                        self.expect(b',')?;
                    }
                }
                Ok(Value::List(items))
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let name = self.take_while(|c| c.is_ascii_alphanumeric() || c == b'_').to_string();
                let mut args = Vec::new();
                if self.eat(b'(') && !self.eat(b')') {
                    loop {
                        let save = self.pos;
                        let key = self.take_while(|c| c.is_ascii_alphanumeric() || c == b'_');
                        let key = if !key.is_empty() && self.eat(b'=') {
                            Some(key.to_string())
                        } else {
                            self.pos = save;
                            None
                        };
                        args.push((key, self.value()?));
                        if self.eat(b')') {
                            break;
                        }
                        self.expect(b',')?;
                    }
                }
                Ok(Value::Call { name, args })
            }
            Some(_) => self.number().map(Value::Number),
            None => Err("missing value".into()),
        }
    }
}

/// Parses one term; the whole string must be consumed.
pub fn parse_value(text: &str) -> Result<Value, String> {
    let mut lx = Lexer::new(text);
    let v = lx.value()?;
    if lx.peek().is_some() {
        return Err(format!("unexpected trailing input at column {}", lx.pos + 1));
    }
    Ok(v)
}

type Args = [(Option<String>, Value)];

fn call_parts(v: &Value) -> Result<(&str, &Args), String> {
    match v {
        Value::Call { name, args } => Ok((name.as_str(), args.as_slice())),
        _ => Err("expected a named term like name(...)".into()),
    }
}

fn numbers(args: &Args, name: &str) -> Result<Vec<f64>, String> {
    args.iter()
        .map(|(_, v)| match v {
            Value::Number(x) => Ok(*x),
            _ => Err(format!("{name}(...) takes numeric arguments")),
        })
        .collect()
}

fn arity(args: &[f64], want: usize, name: &str) -> Result<(), String> {
    if args.len() == want {
        Ok(())
    } else {
        Err(format!("{name} takes {want} argument(s), got {}", args.len()))
    }
}

fn as_count(x: f64, what: &str) -> Result<u64, String> {
    if x >= 0.0 && x.fract() == 0.0 && x <= u32::MAX as f64 {
        Ok(x as u64)
    } else {
        Err(format!("{what} must be a nonnegative integer, got {x}"))
    }
}

pub fn parse_dist(v: &Value) -> Result<DiscretePositiveDist, String> {
    let (name, args) = call_parts(v)?;
    let nums = numbers(args, name)?;
    let out = match name {
        "geometric" => {
            arity(&nums, 1, name)?;
            DiscretePositiveDist::geometric(nums[0])
        }
        "deterministic" => {
            arity(&nums, 1, name)?;
            DiscretePositiveDist::deterministic(as_count(nums[0], "period")?)
        }
        "table" => DiscretePositiveDist::table(nums),
        other => return Err(format!("unknown distribution '{other}'")),
    };
    out.map_err(|e| e.to_string())
}

pub fn parse_channel(text: &str) -> Result<ChannelSpec, String> {
    let v = parse_value(text)?;
    let (name, args) = call_parts(&v)?;
    let out = match name {
        "preset" => {
            let nums = numbers(args, name)?;
            arity(&nums, 1, name)?;
            let id = as_count(nums[0], "preset id")?;
            ChannelSpec::preset(u8::try_from(id).unwrap_or(0))
        }
        "iid" => {
            let nums = numbers(args, name)?;
            arity(&nums, 1, name)?;
            ChannelSpec::iid(nums[0])
        }
        "markov" => {
            let nums = numbers(args, name)?;
            arity(&nums, 2, name)?;
            ChannelSpec::markov(nums[0], nums[1])
        }
        "renewal" => {
            let mut on = None;
            let mut off = None;
            for (key, value) in args {
                match key.as_deref() {
                    Some("on") => on = Some(parse_dist(value)?),
                    Some("off") => off = Some(parse_dist(value)?),
                    _ => return Err("renewal takes on=<dist> and off=<dist>".into()),
                }
            }
            match (on, off) {
                (Some(on), Some(off)) => Ok(ChannelSpec::renewal(on, off)),
                _ => return Err("renewal needs both on= and off=".into()),
            }
        }
        other => return Err(format!("unknown channel '{other}'")),
    };
    out.map_err(|e| e.to_string())
}

pub fn parse_arrivals(text: &str) -> Result<ArrivalProcess, String> {
    let v = parse_value(text)?;
    let (name, args) = call_parts(&v)?;
    let out = match name {
        "batch" => {
            let nums = numbers(args, name)?;
            arity(&nums, 2, name)?;
            let l = u32::try_from(as_count(nums[0], "batch size")?).map_err(|e| e.to_string())?;
            ArrivalProcess::batch(l, nums[1])
        }
        "pmf" => ArrivalProcess::iid(numbers(args, name)?),
        "mm2" => {
            if args.len() != 4 {
                return Err("mm2 takes (a01, a10, [pmf0], [pmf1])".into());
            }
            let num = |v: &Value| match v {
                Value::Number(x) => Ok(*x),
                _ => Err("mm2 transition probabilities must be numbers".to_string()),
            };
            let list = |v: &Value| match v {
                Value::List(x) => Ok(x.clone()),
                _ => Err("mm2 pmfs must be [..] lists".to_string()),
            };
            ArrivalProcess::two_state(num(&args[0].1)?, num(&args[1].1)?, list(&args[2].1)?, list(&args[3].1)?)
        }
        other => return Err(format!("unknown arrival process '{other}'")),
    };
    out.map_err(|e| e.to_string())
}

pub fn parse_policy(text: &str) -> Result<PolicySpec, String> {
    let v = parse_value(text)?;
    let (name, args) = call_parts(&v)?;
    let plain = |p: PolicySpec| {
        if args.is_empty() {
            Ok(p)
        } else {
            Err(format!("{name} takes no arguments"))
        }
    };
    match name {
        "opf" => plain(PolicySpec::Opf),
        "dwm" => plain(PolicySpec::Dwm),
        "pm" => plain(PolicySpec::Pm),
        "maxweight" => plain(PolicySpec::MaxWeight),
        "fbs" => match args {
            [] => Ok(PolicySpec::Fbs { h: None }),
            [(None, Value::Call { name, args })] if name == "auto" && args.is_empty() => {
                Ok(PolicySpec::Fbs { h: None })
            }
            [(None, Value::Number(h))] => Ok(PolicySpec::Fbs {
                h: Some(as_count(*h, "h")?),
            }),
            _ => Err("fbs takes one integer h or 'auto'".into()),
        },
        other => Err(format!("unknown policy '{other}'")),
    }
}

fn report<T>(r: Result<T, String>, line: usize, errors: &mut Vec<ConfigError>) -> Option<T> {
    r.map_err(|message| errors.push(ConfigError { line, message })).ok()
}

fn parse_int(text: &str, key: &str, min: u64) -> Result<u64, String> {
    let v: u64 = text
        .trim()
        .parse()
        .map_err(|_| format!("{key} must be an integer, got '{}'", text.trim()))?;
    if v < min {
        return Err(format!("{key} must be at least {min}, got {v}"));
    }
    Ok(v)
}

/// Parses a whole config file into a validated [`SimConfig`].
pub fn parse_config(text: &str) -> Result<SimConfig, ConfigErrors> {
    let mut errors = Vec::new();
    let mut entries: HashMap<&str, (usize, &str)> = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            errors.push(ConfigError { line, message: format!("expected key = value, got '{body}'") });
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            errors.push(ConfigError {
                line,
                message: format!("unknown key '{key}' (expected one of {})", KEYS.join(", ")),
            });
            continue;
        }
        if let Some((first, _)) = entries.insert(key, (line, value)) {
            errors.push(ConfigError { line, message: format!("duplicate key '{key}' (first set on line {first})") });
        }
    }

    let line_of = |k: &str| entries.get(k).map_or(0, |e| e.0);
    let int = |key: &str, min: u64, default: u64, errors: &mut Vec<ConfigError>| -> Option<u64> {
        match entries.get(key) {
            None => Some(default),
            Some(&(line, v)) => parse_int(v, key, min)
                .map_err(|message| errors.push(ConfigError { line, message }))
                .ok(),
        }
    };
    let n = int("n", 1, 10, &mut errors);
    let seed = int("seed", 0, 1, &mut errors);
    let replications = int("replications", 1, 1, &mut errors);
    let b_max = int("b_max", 0, 12, &mut errors);
    let term = |key: &str, default: &'static str| entries.get(key).copied().unwrap_or((0, default));
    let (line, text) = term("policy", "dwm");
    let policy = report(parse_policy(text), line, &mut errors);
    let (line, text) = term("channel", "preset(1)");
    let channel = report(parse_channel(text), line, &mut errors);
    let (line, text) = term("arrivals", "batch(5, 0.15)");
    let arrivals = report(parse_arrivals(text), line, &mut errors);

    if let Some(a) = &arrivals {
        if let Err(e) = a.check_stable() {
            errors.push(ConfigError { line: line_of("arrivals"), message: e.to_string() });
        }
    }
    let (Some(n), Some(seed), Some(replications), Some(b_max), Some(policy), Some(channel), Some(arrivals)) =
        (n, seed, replications, b_max, policy, channel, arrivals)
    else {
        return Err(ConfigErrors(errors));
    };
    let n = n as usize;
    let b_max = u32::try_from(b_max).unwrap_or(u32::MAX);
    let warmup = int("warmup", 0, default_warmup(n, b_max), &mut errors);
    let sample_gap = int("sample_gap", 1, default_sample_gap(&channel), &mut errors);
    let horizon = warmup.and_then(|w| int("horizon", 1, w + DEFAULT_RUN_SLOTS, &mut errors));
    if let Err(e) = Scheduler::new(policy, n, arrivals.max_batch()) {
        errors.push(ConfigError { line: line_of("policy"), message: e.to_string() });
    }
    if let (Some(w), Some(h)) = (warmup, horizon) {
        if w >= h {
            errors.push(ConfigError {
                line: line_of("horizon").max(line_of("warmup")),
                message: format!("warmup {w} must be below horizon {h}"),
            });
        }
    }
    if !errors.is_empty() {
        return Err(ConfigErrors(errors));
    }
    let cfg = SimConfig {
        n,
        horizon: horizon.expect("checked"),
        warmup: warmup.expect("checked"),
        sample_gap: sample_gap.expect("checked"),
        policy,
        channel,
        arrivals,
        seed,
        replications: u32::try_from(replications).unwrap_or(u32::MAX),
        b_max,
    };
    cfg.validate()
        .map_err(|e| ConfigErrors(vec![ConfigError { line: 0, message: e.to_string() }]))?;
    Ok(cfg)
}

/// Canonical config text; parsing it yields `cfg` again.
pub fn render_config(cfg: &SimConfig) -> String {
    format!(
        "n = {}\nhorizon = {}\nwarmup = {}\nsample_gap = {}\npolicy = {}\nchannel = {}\narrivals = {}\nseed = {}\nreplications = {}\nb_max = {}\n",
        cfg.n,
        cfg.horizon,
        cfg.warmup,
        cfg.sample_gap,
        cfg.policy,
        cfg.channel,
        cfg.arrivals,
        cfg.seed,
        cfg.replications,
        cfg.b_max
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_is_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c.n, 10);
        assert_eq!(c.policy, PolicySpec::Dwm);
        assert_eq!(c.channel, ChannelSpec::preset(1).unwrap());
        assert_eq!(c.arrivals, ArrivalProcess::batch(5, 0.15).unwrap());
        assert_eq!((c.seed, c.replications, c.b_max), (1, 1, 12));
        assert_eq!(c.warmup, 1200);
    }

    #[test]
    fn fbs_n0_rule() {
        let err = parse_config("n = 10\narrivals = batch(5, 0.15)\npolicy = fbs(2)\n").unwrap_err();
        assert_eq!(err.0.len(), 1);
        assert_eq!(err.0[0].line, 3);
        assert!(err.0[0].message.contains("n0 = n \u{2212} Lh = 0 not positive"), "{err}");
        assert!(parse_config("policy = fbs(1)").is_ok());
        assert_eq!(parse_config("policy = fbs(auto)\nn = 4").unwrap().policy, PolicySpec::Fbs { h: None });
    }

    #[test]
    fn preset_expands_to_markov() {
        let c = parse_config("channel = preset(3)").unwrap();
        let m = c.channel.markov_params().unwrap();
        assert_eq!((m.p01, m.p10), (0.06, 0.04));
        assert_eq!(c.channel, ChannelSpec::preset(3).unwrap());
    }

    #[test]
    fn errors_are_line_anchored() {
        let text = "n = 10\n# note\nbogus = 3\nseed = -1\nchannel = markov(0.5)\n";
        let err = parse_config(text).unwrap_err();
        let lines: Vec<usize> = err.0.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![3, 4, 5]);
        assert!(err.to_string().starts_with("line 3: unknown key 'bogus'"));
        let err = parse_config("arrivals = batch(5, 0.3)").unwrap_err();
        assert!(err.to_string().contains("below 1"));
        let err = parse_config("warmup = 10\nhorizon = 5").unwrap_err();
        assert_eq!(err.0[0].line, 2);
    }

    #[test]
    fn nested_terms_round_trip() {
        let text = "n = 6\nhorizon = 5000\nwarmup = 100\nsample_gap = 3\npolicy = maxweight\n\
                    channel = renewal(on=geometric(0.4), off=table(0.5, 0.25, 0.25))\n\
                    arrivals = mm2(0.1, 0.2, [0.9, 0.1], [0.5, 0.3, 0.2])\nseed = 9\nreplications = 2\nb_max = 8 # trailing\n";
        let c = parse_config(text).unwrap();
        let again = parse_config(&render_config(&c)).unwrap();
        assert_eq!(c, again);
        for id in 1..=7 {
            let c = parse_config(&format!("channel = preset({id})\npolicy = fbs(1)\narrivals = pmf(0.5, 0.25, 0.25)")).unwrap();
            assert_eq!(parse_config(&render_config(&c)).unwrap(), c);
        }
    }
}
