use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{IceError, Result};
use crate::vocab::TokenId;

pub const MIN_STEPS: usize = 2;
pub const MAX_STEPS: usize = 6;

/// Arithmetic operator, evaluated modulo 10.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Op {
    Add,
    Sub,
    Mul,
}

impl Op {
    pub const ALL: [Op; 3] = [Op::Add, Op::Sub, Op::Mul];

    pub fn apply(self, lhs: u8, rhs: u8) -> u8 {
        let (l, r) = (lhs as u16, rhs as u16);
        let v = match self {
            Op::Add => l + r,
            Op::Sub => l + 10 - r,
            Op::Mul => l * r,
        };
        (v % 10) as u8
    }

    pub fn token(self) -> TokenId {
        match self {
            Op::Add => TokenId::PLUS,
            Op::Sub => TokenId::MINUS,
            Op::Mul => TokenId::TIMES,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Op::Add => "+",
            Op::Sub => "-",
            Op::Mul => "*",
        }
    }

    fn parse(s: &str) -> Result<Op> {
        match s {
            "+" => Ok(Op::Add),
            "-" | "\u{2212}" => Ok(Op::Sub),
            "*" | "x" | "\u{00d7}" => Ok(Op::Mul),
            other => Err(IceError::Parse(format!("unknown operator {other:?}"))),
        }
    }
}

/// A chain `a = d0; b = a op1 d1; …` of `m` assignments over digits mod 10.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChainArithTask {
    first: u8,
    steps: Vec<(Op, u8)>,
}

impl ChainArithTask {
    pub fn new(first: u8, steps: Vec<(Op, u8)>) -> Result<Self> {
        let m = steps.len() + 1;
        if !(MIN_STEPS..=MAX_STEPS).contains(&m) {
            return Err(IceError::InvalidInput(format!("m = {m} outside [{MIN_STEPS}, {MAX_STEPS}]")));
        }
        if first > 9 || steps.iter().any(|&(_, d)| d > 9) {
            return Err(IceError::InvalidInput("operands must be single digits".into()));
        }
        Ok(Self { first, steps })
    }

    /// Uniformly samples a task with `m` assignments.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, m: usize) -> Result<Self> {
        let first = rng.gen_range(0..10);
        let steps = (1..m).map(|_| (Op::ALL[rng.gen_range(0..3)], rng.gen_range(0..10))).collect();
        Self::new(first, steps)
    }

    /// Number of assignments `m`.
    pub fn m(&self) -> usize {
        self.steps.len() + 1
    }

    pub fn first(&self) -> u8 {
        self.first
    }

    pub fn steps(&self) -> &[(Op, u8)] {
        &self.steps
    }

    /// Error-free intermediate results `r_1 … r_{m-1}`.
    pub fn chained_values(&self) -> Vec<u8> {
        let mut acc = self.first;
        self.steps
            .iter()
            .map(|&(op, d)| {
                acc = op.apply(acc, d);
                acc
            })
            .collect()
    }

    pub fn answer(&self) -> u8 {
        *self.chained_values().last().expect("m >= 2")
    }

    /// `a = d0 ; b = a op1 d1 ; … var_{m-1} ?`
    pub fn prompt_tokens(&self) -> Vec<TokenId> {
        let mut out = vec![TokenId::var(0), TokenId::EQ, TokenId::digit(self.first), TokenId::SEMI];
        for (i, &(op, d)) in self.steps.iter().enumerate() {
            out.extend([
                TokenId::var(i + 1),
                TokenId::EQ,
                TokenId::var(i),
                op.token(),
                TokenId::digit(d),
                TokenId::SEMI,
            ]);
        }
        out.extend([TokenId::var(self.m() - 1), TokenId::QUERY]);
        out
    }
}

/// Task-file line format: `m;d0;op1,d1;op2,d2;…`.
impl fmt::Display for ChainArithTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{};{}", self.m(), self.first)?;
        for (op, d) in &self.steps {
            write!(f, ";{},{}", op.symbol(), d)?;
        }
        Ok(())
    }
}

impl FromStr for ChainArithTask {
    type Err = IceError;

    fn from_str(line: &str) -> Result<Self> {
        let mut fields = line.trim().split(';');
        let digit =
            |s: &str| -> Result<u8> { s.trim().parse::<u8>().map_err(|_| IceError::Parse(format!("bad digit {s:?}"))) };
        let m: usize = fields
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| IceError::Parse(format!("missing step count in {line:?}")))?;
        let first = digit(fields.next().ok_or_else(|| IceError::Parse("missing d0".into()))?)?;
        let steps = fields
            .map(|field| {
                let (op, d) = field.split_once(',').ok_or_else(|| IceError::Parse(format!("bad step {field:?}")))?;
                Ok((Op::parse(op.trim())?, digit(d)?))
            })
            .collect::<Result<Vec<_>>>()?;
        if steps.len() + 1 != m {
            return Err(IceError::Parse(format!("declared m = {m} but found {} steps", steps.len())));
        }
        Self::new(first, steps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn example_task() {
        let t: ChainArithTask = "2;3;+,4".parse().unwrap();
        assert_eq!(t.m(), 2);
        assert_eq!(t.answer(), 7);
        let rendered: Vec<String> = t.prompt_tokens().iter().map(|t| t.to_string()).collect();
        assert_eq!(rendered.join(" "), "a = 3 ; b = a + 4 ; b ?");
        assert_eq!(t.to_string(), "2;3;+,4");
    }

    #[test]
    fn modular_ops() {
        assert_eq!(Op::Sub.apply(2, 5), 7);
        assert_eq!(Op::Mul.apply(7, 8), 6);
        assert_eq!(Op::Add.apply(9, 9), 8);
        let t: ChainArithTask = "4;9;*,3;-,8;+,5".parse().unwrap();
        assert_eq!(t.chained_values(), vec![7, 9, 4]);
    }

    #[test]
    fn parse_errors() {
        assert!("3;1;+,2".parse::<ChainArithTask>().is_err());
        assert!("1;1".parse::<ChainArithTask>().is_err());
        assert!("2;1;/,2".parse::<ChainArithTask>().is_err());
        assert!("2;12;+,2".parse::<ChainArithTask>().is_err());
        assert!("7;1;+,1;+,1;+,1;+,1;+,1;+,1".parse::<ChainArithTask>().is_err());
        assert_eq!("2;1;\u{00d7},2".parse::<ChainArithTask>().unwrap().answer(), 2);
    }

    #[test]
    fn display_round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for m in 2..=6 {
            let t = ChainArithTask::sample(&mut rng, m).unwrap();
            assert_eq!(t.to_string().parse::<ChainArithTask>().unwrap(), t);
            assert!(t.answer() < 10);
        }
    }
}
