//! Task generation and task files.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ice_core::ChainArithTask;

/// `n` tasks with `m` drawn uniformly from `m_min..=m_max`.
pub fn gen_tasks(seed: u64, n: usize, m_min: usize, m_max: usize) -> Result<Vec<ChainArithTask>> {
    if n == 0 {
        bail!("task count must be at least 1");
    }
    if !(2..=6).contains(&m_min) || !(2..=6).contains(&m_max) || m_min > m_max {
        bail!("m range [{m_min}, {m_max}] must lie within [2, 6]");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let m = rng.gen_range(m_min..=m_max);
            Ok(ChainArithTask::sample(&mut rng, m)?)
        })
        .collect()
}

pub fn format_tasks(tasks: &[ChainArithTask]) -> String {
    tasks.iter().map(|t| format!("{t}\n")).collect()
}

/// One task per line; blank lines and `#` comments are ignored.
pub fn parse_tasks(text: &str) -> Result<Vec<ChainArithTask>> {
    let mut tasks = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        tasks.push(line.parse().with_context(|| format!("task line {}", i + 1))?);
    }
    if tasks.is_empty() {
        bail!("no tasks found");
    }
    Ok(tasks)
}

pub fn write_tasks(path: &Path, tasks: &[ChainArithTask]) -> Result<()> {
    fs::write(path, format_tasks(tasks)).with_context(|| format!("writing tasks to {}", path.display()))
}

pub fn read_tasks(path: &Path) -> Result<Vec<ChainArithTask>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading tasks from {}", path.display()))?;
    parse_tasks(&text).with_context(|| format!("in task file {}", path.display()))
}

/// Decoder seed for one task, independent of scheduling order.
pub fn task_seed(suite_seed: u64, task_id: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(suite_seed);
    rng.set_stream(task_id as u64);
    rng.next_u64()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let a = format_tasks(&gen_tasks(1, 100, 2, 4).unwrap());
        let b = format_tasks(&gen_tasks(1, 100, 2, 4).unwrap());
        assert_eq!(a, b);
        assert_ne!(a, format_tasks(&gen_tasks(2, 100, 2, 4).unwrap()));
    }

    #[test]
    fn generated_tasks_are_in_range() {
        let tasks = gen_tasks(5, 300, 2, 6).unwrap();
        assert!(tasks.iter().all(|t| (2..=6).contains(&t.m()) && t.answer() <= 9));
        assert_eq!(parse_tasks(&format_tasks(&tasks)).unwrap(), tasks);
    }

    #[test]
    fn preconditions() {
        assert!(gen_tasks(1, 0, 2, 4).is_err());
        assert!(gen_tasks(1, 5, 1, 4).is_err());
        assert!(gen_tasks(1, 5, 4, 3).is_err());
        assert!(parse_tasks("# only a comment\n").is_err());
        assert!(parse_tasks("2;3;+,x\n").is_err());
    }

    #[test]
    fn seeds_differ_per_task() {
        assert_ne!(task_seed(0, 0), task_seed(0, 1));
        assert_eq!(task_seed(9, 4), task_seed(9, 4));
    }
}
