//! Ablation grids: named axes, their values and the cartesian product.

use std::fmt;
use std::str::FromStr;

use crate::config::{ConfigError, Settings};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// Sets `lambda` and `mu` to the same value.
    LambdaMu,
    Lambda,
    Mu,
    Nu,
    P,
    BatchSize,
    ProjectorDim,
    Ratio,
    /// Values are `kind+kind` augmentation pairs.
    Aug,
    Loss,
    Seed,
    Epochs,
}

impl Axis {
    pub const ALL: [Axis; 12] = [
        Axis::LambdaMu,
        Axis::Lambda,
        Axis::Mu,
        Axis::Nu,
        Axis::P,
        Axis::BatchSize,
        Axis::ProjectorDim,
        Axis::Ratio,
        Axis::Aug,
        Axis::Loss,
        Axis::Seed,
        Axis::Epochs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Axis::LambdaMu => "lambda-mu",
            Axis::Lambda => "lambda",
            Axis::Mu => "mu",
            Axis::Nu => "nu",
            Axis::P => "p",
            Axis::BatchSize => "batch-size",
            Axis::ProjectorDim => "projector-dim",
            Axis::Ratio => "ratio",
            Axis::Aug => "aug",
            Axis::Loss => "loss",
            Axis::Seed => "seed",
            Axis::Epochs => "epochs",
        }
    }

    /// The runs-CSV column plotted for this axis, if it is numeric.
    pub fn column(self) -> Option<&'static str> {
        Some(match self {
            Axis::LambdaMu | Axis::Lambda => "lambda",
            Axis::Mu => "mu",
            Axis::Nu => "nu",
            Axis::P => "p",
            Axis::BatchSize => "batch_size",
            Axis::ProjectorDim => "projector_dim",
            Axis::Ratio => "ratio",
            Axis::Seed => "seed",
            Axis::Aug | Axis::Loss | Axis::Epochs => return None,
        })
    }

    pub fn apply(self, s: &mut Settings, value: &str) -> Result<(), ConfigError> {
        match self {
            Axis::LambdaMu => {
                s.set("lambda", value)?;
                s.set("mu", value)
            }
            Axis::Aug => {
                let (a, b) = value.split_once('+').ok_or_else(|| ConfigError::BadValue {
                    key: "aug".into(),
                    value: value.into(),
                    detail: "expected a pair such as nodedrop+subgraph".into(),
                })?;
                s.set("aug-a", a)?;
                s.set("aug-b", b)
            }
            other => s.set(other.name(), value),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        let key = s.trim().replace('_', "-").to_ascii_lowercase();
        Axis::ALL
            .into_iter()
            .find(|a| a.name() == key)
            .ok_or_else(|| ConfigError::UnknownKey(format!("axis {s}")))
    }
}

/// Axes with their value lists, expanded row-major: the last axis varies
/// fastest.
#[derive(Clone, Debug)]
pub struct Grid {
    pub axes: Vec<(Axis, Vec<String>)>,
}

impl Grid {
    pub fn parse(axes: &[String], values: &[String]) -> Result<Self, ConfigError> {
        if axes.len() != values.len() {
            return Err(ConfigError::BadValue {
                key: "values".into(),
                value: values.join(" "),
                detail: format!("{} --axis flags but {} --values lists", axes.len(), values.len()),
            });
        }
        let axes = axes
            .iter()
            .zip(values)
            .map(|(a, v)| {
                let axis: Axis = a.parse()?;
                let list: Vec<String> = v
                    .split(',')
                    .map(|x| x.trim().to_owned())
                    .filter(|x| !x.is_empty())
                    .collect();
                if list.is_empty() {
                    return Err(ConfigError::BadValue {
                        key: axis.name().into(),
                        value: v.clone(),
                        detail: "no values".into(),
                    });
                }
                Ok((axis, list))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { axes })
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|(_, v)| v.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Settings for every cell, in grid order. Invalid values are reported
    /// before anything runs.
    pub fn cells(&self, base: &Settings) -> Result<Vec<Settings>, ConfigError> {
        let mut cells = vec![base.clone()];
        for (axis, values) in &self.axes {
            let mut next = Vec::with_capacity(cells.len() * values.len());
            for cell in &cells {
                for v in values {
                    let mut c = cell.clone();
                    axis.apply(&mut c, v)?;
                    next.push(c);
                }
            }
            cells = next;
        }
        Ok(cells)
    }
}
