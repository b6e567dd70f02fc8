use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::catalog::Builtin;
use crate::error::{Error, Result};
use crate::grid::{GridSpec, SampledField};
use crate::norm::ModParams;

/// One named battery field together with the recipe that produced it, so it
/// can be resampled on a refined grid.
#[derive(Debug, Clone)]
pub struct Member {
    pub name: String,
    pub source: Builtin,
    pub field: SampledField,
}

impl Member {
    /// Power of `|w|` at which `sup_x |V_g f(x, w)|` decays; `None` for fields
    /// whose STFT decays faster than any power.
    pub fn decay_order(&self) -> Option<f64> {
        match self.source {
            Builtin::Jump { .. } => Some(1.0),
            Builtin::Triangle { .. } => Some(2.0),
            _ => None,
        }
    }

    /// Whether the field belongs to `M^{p,q}_s`: a `|w|^{-d}` tail is
    /// `q`-integrable against `⟨w⟩^s` iff `s < d - 1/q` (`s ≤ d` for `q = ∞`).
    pub fn belongs_to(&self, params: ModParams) -> bool {
        match self.decay_order() {
            None => true,
            Some(d) => {
                let q = params.q.value();
                if q.is_infinite() {
                    params.s <= d
                } else {
                    params.s < d - 1.0 / q
                }
            }
        }
    }
}

/// Deterministic test-field collection: the four structured catalog entries
/// followed by seeded random band-limited fields.
#[derive(Debug, Clone)]
pub struct Battery {
    seed: u64,
    grid: GridSpec,
    members: Vec<Member>,
}

impl Battery {
    pub const MIN_SIZE: usize = 4;

    pub fn new(grid: GridSpec, seed: u64, size: usize) -> Result<Self> {
        if size < Self::MIN_SIZE {
            return Err(Error::InvalidParameter(format!(
                "a battery holds at least {} fields, got {size}",
                Self::MIN_SIZE
            )));
        }
        if grid.dim() != 1 {
            return Err(Error::InvalidParameter(format!(
                "the battery needs a one-dimensional grid (triangle and jump are 1-D), got dim {}",
                grid.dim()
            )));
        }
        let mut recipes = vec![
            ("gaussian".to_string(), Builtin::gaussian()),
            ("triangle".to_string(), Builtin::triangle()),
            ("jump".to_string(), Builtin::jump()),
            ("plane_wave".to_string(), Builtin::plane_wave(1)),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in 0..size - recipes.len() {
            recipes.push((format!("random_bandlimited_{i}"), Builtin::random_bandlimited(rng.gen())));
        }
        let members = recipes
            .into_iter()
            .map(|(name, source)| {
                let field = source.sample(&grid)?;
                Ok(Member { name, source, field })
            })
            .collect::<Result<_>>()?;
        Ok(Battery { seed, grid, members })
    }

    /// The same recipes sampled with twice the points on the same box.
    pub fn refined(&self) -> Result<Battery> {
        Battery::new(self.grid.refined(), self.seed, self.members.len())
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn get(&self, name: &str) -> Option<&Member> {
        self.members.iter().find(|m| m.name == name)
    }

    /// Members lying in `M^{p,q}_s`.
    pub fn admissible(&self, params: ModParams) -> Vec<&Member> {
        self.members.iter().filter(|m| m.belongs_to(params)).collect()
    }

    /// `(name, field)` pairs in battery order.
    pub fn named_fields(&self) -> Vec<(String, SampledField)> {
        self.members.iter().map(|m| (m.name.clone(), m.field.clone())).collect()
    }
}
