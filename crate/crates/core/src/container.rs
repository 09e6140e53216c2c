//! Text container for inverse problems.
//!
//! ```text
//! stochoed-problem 1
//! block forward 2 4
//! 0.5 0.5 0.0 0.0
//! 0.0 0.0 0.5 0.5
//! block prior_mean 4 1
//! ...
//! sensor_map 2
//! 0
//! 1
//! ```
//!
//! Dense blocks are row-major with one matrix row per line. Values are
//! written in shortest round-trip form, so export followed by import
//! reproduces the problem bit for bit.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};

use crate::bayes::InverseProblem;
use crate::error::{Error, Result};

const MAGIC: &str = "stochoed-problem 1";

fn write_block<W: Write>(out: &mut W, name: &str, m: &DMatrix<f64>) -> Result<()> {
    writeln!(out, "block {name} {} {}", m.nrows(), m.ncols())?;
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:?}", m[(r, c)])).collect();
        writeln!(out, "{}", row.join(" "))?;
    }
    Ok(())
}

pub fn write_problem<W: Write>(problem: &InverseProblem, mut out: W) -> Result<()> {
    writeln!(out, "{MAGIC}")?;
    write_block(&mut out, "forward", problem.forward())?;
    let mean = DMatrix::from_column_slice(problem.nstate(), 1, problem.prior_mean().as_slice());
    write_block(&mut out, "prior_mean", &mean)?;
    write_block(&mut out, "prior_cov", problem.prior_cov())?;
    write_block(&mut out, "noise_cov", problem.noise_cov())?;
    write_block(&mut out, "mass", problem.mass())?;
    writeln!(out, "sensor_map {}", problem.nsens())?;
    for rows in problem.sensor_map() {
        let rows: Vec<String> = rows.iter().map(usize::to_string).collect();
        writeln!(out, "{}", rows.join(" "))?;
    }
    Ok(())
}

fn parse_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Format(format!("line {line}: {msg}"))
}

pub fn read_problem<R: BufRead>(input: R) -> Result<InverseProblem> {
    let mut lines = input
        .lines()
        .enumerate()
        .map(|(i, l)| l.map(|l| (i + 1, l)));
    match lines.next().transpose()? {
        Some((_, l)) if l.trim() == MAGIC => {}
        _ => return Err(parse_err(1, format!("expected header `{MAGIC}`"))),
    }

    let mut blocks: HashMap<String, DMatrix<f64>> = HashMap::new();
    let mut sensor_map = None;
    while let Some((lineno, line)) = lines.next().transpose()? {
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            [] => continue,
            ["block", name, rows, cols] => {
                let rows: usize = rows.parse().map_err(|_| parse_err(lineno, "bad row count"))?;
                let cols: usize = cols.parse().map_err(|_| parse_err(lineno, "bad column count"))?;
                let mut data = Vec::with_capacity(rows * cols);
                for _ in 0..rows {
                    let (ln, row) = lines
                        .next()
                        .transpose()?
                        .ok_or_else(|| parse_err(lineno, format!("block `{name}` truncated")))?;
                    let before = data.len();
                    for tok in row.split_whitespace() {
                        data.push(tok.parse::<f64>().map_err(|_| parse_err(ln, format!("bad number `{tok}`")))?);
                    }
                    if data.len() - before != cols {
                        return Err(parse_err(ln, format!("expected {cols} values")));
                    }
                }
                blocks.insert((*name).to_owned(), DMatrix::from_row_slice(rows, cols, &data));
            }
            ["sensor_map", count] => {
                let count: usize = count.parse().map_err(|_| parse_err(lineno, "bad sensor count"))?;
                let mut map = Vec::with_capacity(count);
                for _ in 0..count {
                    let (ln, row) = lines
                        .next()
                        .transpose()?
                        .ok_or_else(|| parse_err(lineno, "sensor_map truncated"))?;
                    map.push(
                        row.split_whitespace()
                            .map(|t| t.parse::<usize>().map_err(|_| parse_err(ln, format!("bad row index `{t}`"))))
                            .collect::<Result<Vec<_>>>()?,
                    );
                }
                sensor_map = Some(map);
            }
            _ => return Err(parse_err(lineno, format!("unexpected `{line}`"))),
        }
    }

    let mut take = |name: &str| {
        blocks
            .remove(name)
            .ok_or_else(|| Error::Format(format!("missing block `{name}`")))
    };
    let forward = take("forward")?;
    let mean = take("prior_mean")?;
    let prior_cov = take("prior_cov")?;
    let noise_cov = take("noise_cov")?;
    let mass = blocks.remove("mass");
    let sensor_map = sensor_map.ok_or_else(|| Error::Format("missing sensor_map".into()))?;
    InverseProblem::new(
        forward,
        DVector::from_column_slice(mean.as_slice()),
        prior_cov,
        noise_cov,
        mass,
        sensor_map,
    )
}
