//! Residual shortcut topologies for spiking blocks.
//!
//! | kind       | merged operands              |
//! |------------|------------------------------|
//! | `Vanilla`  | block spikes, skip features  |
//! | `Sew`      | block spikes, skip spikes    |
//! | `Membrane` | block features, skip features|
//! | `Rmp`      | block features, skip `MP¹`   |
//!
//! The skip operands are taken from the bundle entering the block; `Rmp`
//! carries the entry spiking layer's accumulated membrane potential.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ShortcutType {
    Vanilla,
    Sew,
    Membrane,
    Rmp,
}

impl ShortcutType {
    pub fn name(self) -> &'static str {
        match self {
            ShortcutType::Vanilla => "VANILLA",
            ShortcutType::Sew => "SEW",
            ShortcutType::Membrane => "MEMBRANE",
            ShortcutType::Rmp => "RMP",
        }
    }
}

/// Elementwise merge function `f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Combine {
    #[default]
    Add,
    /// Logical AND of binary operands, evaluated as a product.
    And,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ShortcutKind {
    pub kind: ShortcutType,
    #[serde(default)]
    pub combine: Combine,
}

impl ShortcutKind {
    pub fn new(kind: ShortcutType) -> Self {
        Self {
            kind,
            combine: Combine::Add,
        }
    }

    pub fn rmp() -> Self {
        Self::new(ShortcutType::Rmp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.combine == Combine::And && self.kind != ShortcutType::Sew {
            return Err(Error::InvalidArgument(format!(
                "AND combine is only defined for SEW shortcuts, not {}",
                self.kind.name()
            )));
        }
        Ok(())
    }
}

/// Signals available at a block boundary.
#[derive(Debug, Clone, Copy, Default)]
pub struct Bundle {
    /// Most recent real-valued (normalized) features.
    pub features: Option<Var>,
    /// Most recent spike output.
    pub spikes: Option<Var>,
    /// Accumulated membrane potential of the most recent spiking layer.
    pub mp1: Option<Var>,
}

fn need(kind: ShortcutType, field: &'static str, v: Option<Var>) -> Result<Var> {
    v.ok_or(Error::MissingBundleField {
        kind: kind.name(),
        field,
    })
}

/// Combines the block output with the skip path.
pub fn merge(tape: &mut Tape, kind: ShortcutKind, skip: &Bundle, out: &Bundle) -> Result<Var> {
    kind.validate()?;
    let k = kind.kind;
    let (main, side) = match k {
        ShortcutType::Vanilla => (need(k, "spikes", out.spikes)?, need(k, "features", skip.features)?),
        ShortcutType::Sew => (need(k, "spikes", out.spikes)?, need(k, "spikes", skip.spikes)?),
        ShortcutType::Membrane => (need(k, "features", out.features)?, need(k, "features", skip.features)?),
        ShortcutType::Rmp => (need(k, "features", out.features)?, need(k, "mp1", skip.mp1)?),
    };
    match kind.combine {
        Combine::Add => tape.add(main, side),
        Combine::And => tape.mul(main, side),
    }
}

/// Runs `block` on `input` and merges its output with the skip path.
pub fn apply_shortcut<F>(tape: &mut Tape, kind: ShortcutKind, input: &Bundle, block: F) -> Result<Var>
where
    F: FnOnce(&mut Tape, &Bundle) -> Result<Bundle>,
{
    kind.validate()?;
    let out = block(tape, input)?;
    merge(tape, kind, input, &out)
}
