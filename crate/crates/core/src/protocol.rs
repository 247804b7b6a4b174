//! The bra-ket plurality protocol: agent states, weights and the pairwise
//! transition.
//!
//! Every agent stores a triple `(bra, ket, out)` of colors in `[0, k-1]`,
//! so the protocol uses exactly `k^3` states. An agent starts as `⟨c|c⟩`
//! with `out = c`. When two agents meet they
//!
//! 1. exchange kets if that strictly lowers the smaller of their two weights,
//! 2. then, if either (post-exchange) agent is a self-loop `⟨i|i⟩`, both set
//!    `out = i`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("the number of colors k must be at least 1")]
    NoColors,
    #[error("color {color} is out of range for k = {k}")]
    ColorOutOfRange { color: u32, k: u32 },
}

/// An input color. Colors are dense integers `0..k`; the numeric value
/// matters because weights measure clockwise distance on the color circle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Color(pub u32);

impl Color {
    pub fn value(self) -> u32 {
        self.0
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for Color {
    fn from(v: u32) -> Self {
        Color(v)
    }
}

/// Weight of a bra-ket, always in `[1, k]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Weight(pub u32);

impl Weight {
    pub fn value(self) -> u32 {
        self.0
    }
}

/// One agent's state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgentState {
    pub bra: Color,
    pub ket: Color,
    pub out: Color,
}

impl AgentState {
    pub const fn new(bra: Color, ket: Color, out: Color) -> Self {
        AgentState { bra, ket, out }
    }

    pub fn is_self_loop(&self) -> bool {
        self.bra == self.ket
    }

    pub fn braket(&self) -> (Color, Color) {
        (self.bra, self.ket)
    }
}

impl fmt::Display for AgentState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "⟨{}|{}⟩/{}", self.bra, self.ket, self.out)
    }
}

/// Result of one pairwise interaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interaction {
    pub a: AgentState,
    pub b: AgentState,
    /// Step 1 swapped the kets.
    pub exchanged: bool,
    /// Step 2 modified at least one `out` field.
    pub out_changed: bool,
}

impl Interaction {
    pub fn changed(&self) -> bool {
        self.exchanged || self.out_changed
    }
}

/// The protocol instantiated for a fixed number of colors `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Protocol {
    k: u32,
}

impl Protocol {
    pub fn new(k: u32) -> Result<Self, ProtocolError> {
        if k == 0 {
            return Err(ProtocolError::NoColors);
        }
        Ok(Protocol { k })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// Number of distinct agent states, `k^3`.
    pub fn state_count(&self) -> u64 {
        u64::from(self.k).pow(3)
    }

    pub fn color(&self, value: u32) -> Result<Color, ProtocolError> {
        self.check_color(Color(value))
    }

    pub fn check_color(&self, color: Color) -> Result<Color, ProtocolError> {
        if color.0 < self.k {
            Ok(color)
        } else {
            Err(ProtocolError::ColorOutOfRange {
                color: color.0,
                k: self.k,
            })
        }
    }

    pub fn check_state(&self, state: &AgentState) -> Result<(), ProtocolError> {
        self.check_color(state.bra)?;
        self.check_color(state.ket)?;
        self.check_color(state.out)?;
        Ok(())
    }

    /// `k` for a self-loop, otherwise the clockwise distance `(ket - bra) mod k`.
    pub fn weight(&self, bra: Color, ket: Color) -> Result<Weight, ProtocolError> {
        self.check_color(bra)?;
        self.check_color(ket)?;
        Ok(self.weight_unchecked(bra, ket))
    }

    #[inline]
    pub(crate) fn weight_unchecked(&self, bra: Color, ket: Color) -> Weight {
        if bra == ket {
            Weight(self.k)
        } else {
            // bra, ket < k so the sum cannot reach 2k
            Weight((ket.0 + self.k - bra.0) % self.k)
        }
    }

    pub fn state_weight(&self, state: &AgentState) -> Weight {
        self.weight_unchecked(state.bra, state.ket)
    }

    pub fn init_agent(&self, input: Color) -> Result<AgentState, ProtocolError> {
        self.check_color(input)?;
        Ok(AgentState::new(input, input, input))
    }

    /// Applies the two-step transition to the pair `(a, b)`.
    ///
    /// The rule is symmetric: swapping the arguments swaps the returned states
    /// and leaves the flags unchanged.
    pub fn interact(&self, a: AgentState, b: AgentState) -> Result<Interaction, ProtocolError> {
        self.check_state(&a)?;
        self.check_state(&b)?;
        Ok(self.interact_unchecked(a, b))
    }

    #[inline]
    pub(crate) fn interact_unchecked(&self, mut a: AgentState, mut b: AgentState) -> Interaction {
        let before = self
            .weight_unchecked(a.bra, a.ket)
            .min(self.weight_unchecked(b.bra, b.ket));
        let after = self
            .weight_unchecked(a.bra, b.ket)
            .min(self.weight_unchecked(b.bra, a.ket));
        let exchanged = after < before;
        if exchanged {
            std::mem::swap(&mut a.ket, &mut b.ket);
        }

        // Two distinct self-loops always swap, so at most one loop color remains.
        let looped = if a.is_self_loop() {
            Some(a.bra)
        } else if b.is_self_loop() {
            Some(b.bra)
        } else {
            None
        };
        debug_assert!(!(a.is_self_loop() && b.is_self_loop()) || a.bra == b.bra);

        let mut out_changed = false;
        if let Some(color) = looped {
            out_changed = a.out != color || b.out != color;
            a.out = color;
            b.out = color;
        }

        Interaction {
            a,
            b,
            exchanged,
            out_changed,
        }
    }

    /// Every state of the protocol, in lexicographic `(bra, ket, out)` order.
    pub fn all_states(&self) -> impl Iterator<Item = AgentState> + '_ {
        let k = self.k;
        (0..k).flat_map(move |bra| {
            (0..k).flat_map(move |ket| {
                (0..k).map(move |out| AgentState::new(Color(bra), Color(ket), Color(out)))
            })
        })
    }
}
