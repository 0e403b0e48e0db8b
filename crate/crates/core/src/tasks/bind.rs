use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::world::WorldModel;
use crate::Token;

use super::formula::{Literal, TaskSpec, Var};

/// Which functions may fill task slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BindingPolicy {
    pub allow_identity: bool,
    pub allow_designated: bool,
    /// Bind the first two slots to the designated pair.
    pub recombine: bool,
}

impl Default for BindingPolicy {
    fn default() -> Self {
        BindingPolicy {
            allow_identity: false,
            allow_designated: false,
            recombine: false,
        }
    }
}

impl BindingPolicy {
    pub fn recombined() -> Self {
        BindingPolicy {
            recombine: true,
            ..Self::default()
        }
    }

    /// Any function, including the identity and the designated pair.
    pub fn permissive() -> Self {
        BindingPolicy {
            allow_identity: true,
            allow_designated: true,
            recombine: false,
        }
    }

    /// Functions available for slots not fixed by recombination.
    pub fn pool(&self, world: &WorldModel) -> Vec<usize> {
        let pair = world.has_designated_pair().then(|| world.designated_pair());
        (1..=world.num_functions())
            .filter(|&f| self.allow_identity || f != 1)
            .filter(|&f| match pair {
                Some((a, b)) if !self.allow_designated || self.recombine => f != a && f != b,
                _ => true,
            })
            .collect()
    }

    /// Draws distinct functions for `n_slots` slots.
    pub fn draw(&self, world: &WorldModel, n_slots: usize, rng: &mut StreamRng) -> Result<Vec<usize>> {
        let mut fixed = Vec::new();
        if self.recombine {
            if n_slots < 2 {
                return Err(Error::Validation(
                    "recombination needs at least two function slots".into(),
                ));
            }
            if !world.has_designated_pair() {
                return Err(Error::Validation("world has no designated pair".into()));
            }
            let (a, b) = world.designated_pair();
            fixed = vec![a, b];
        }
        let mut pool = self.pool(world);
        let need = n_slots - fixed.len();
        if pool.len() < need {
            return Err(Error::Capacity(format!(
                "{need} distinct functions needed, {} available",
                pool.len()
            )));
        }
        pool.shuffle(rng);
        fixed.extend_from_slice(&pool[..need]);
        Ok(fixed)
    }
}

/// A task with concrete functions, labels and separator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundTask {
    pub spec: TaskSpec,
    /// One-based function index per slot.
    pub functions: Vec<usize>,
    /// Binary tasks only.
    pub labels: Option<[Token; 2]>,
    pub separator: Token,
}

/// The unique answer to an input and the disjuncts it satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Candidate {
    pub x: Token,
    pub y: Option<Token>,
    pub z: Token,
    /// Bit `d` is set when disjunct `d` holds for `(x, y, z)`.
    pub disjuncts: u32,
}

impl BoundTask {
    pub fn new(spec: TaskSpec, functions: Vec<usize>, labels: Option<[Token; 2]>, separator: Token) -> Result<Self> {
        if functions.len() != spec.num_function_slots() {
            return Err(Error::Validation(format!(
                "task {} has {} slots, {} functions given",
                spec.task_id,
                spec.num_function_slots(),
                functions.len()
            )));
        }
        if spec.is_binary() != labels.is_some() {
            return Err(Error::Validation("labels are required exactly for binary tasks".into()));
        }
        if let Some([a, b]) = labels {
            if a == b {
                return Err(Error::Validation("labels must differ".into()));
            }
        }
        Ok(BoundTask {
            spec,
            functions,
            labels,
            separator,
        })
    }

    /// Random binding: functions from `policy`, distinct labels and a
    /// separator uniform over Ω.
    pub fn sample(spec: &TaskSpec, world: &WorldModel, policy: &BindingPolicy, rng: &mut StreamRng) -> Result<Self> {
        let functions = policy.draw(world, spec.num_function_slots(), rng)?;
        let n = world.omega_size() as Token;
        let labels = spec.is_binary().then(|| {
            let a = rng.random_range(0..n);
            let mut b = rng.random_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            [a, b]
        });
        let separator = rng.random_range(0..n);
        BoundTask::new(spec.clone(), functions, labels, separator)
    }

    fn literal_holds(&self, world: &WorldModel, lit: &Literal, env: &[Token; 4]) -> bool {
        match *lit {
            Literal::FuncEq { slot, arg, result } => {
                world.eval(self.functions[slot], env[arg as usize]) == env[result as usize]
            }
            Literal::LabelEq { label } => self.labels.is_some_and(|l| env[Var::Z as usize] == l[label]),
        }
    }

    /// Whether disjunct `d` holds at `(x, y, z)`, with `a` existentially
    /// quantified over Ω.
    pub fn disjunct_holds(&self, world: &WorldModel, d: usize, x: Token, y: Token, z: Token) -> bool {
        let lits = &self.spec.disjuncts[d];
        let mut env = [x, y, z, 0];
        if !lits
            .iter()
            .filter(|l| !l.mentions(Var::A))
            .all(|l| self.literal_holds(world, l, &env))
        {
            return false;
        }
        let with_a: Vec<&Literal> = lits.iter().filter(|l| l.mentions(Var::A)).collect();
        if with_a.is_empty() {
            return true;
        }
        (0..world.omega_size() as Token).any(|a| {
            env[Var::A as usize] = a;
            with_a.iter().all(|l| self.literal_holds(world, l, &env))
        })
    }

    pub fn satisfied_disjuncts(&self, world: &WorldModel, x: Token, y: Token, z: Token) -> u32 {
        (0..self.spec.disjuncts.len())
            .filter(|&d| self.disjunct_holds(world, d, x, y, z))
            .fold(0, |m, d| m | 1 << d)
    }

    /// Every `z` satisfying the formula at the given inputs, by brute force.
    pub fn enumerate_solutions(&self, world: &WorldModel, x: Token, y: Option<Token>) -> Vec<Token> {
        let y = y.unwrap_or(0);
        (0..world.omega_size() as Token)
            .filter(|&z| self.satisfied_disjuncts(world, x, y, z) != 0)
            .collect()
    }

    /// All inputs whose answer is unique, with that answer.
    pub fn candidates(&self, world: &WorldModel) -> Vec<Candidate> {
        let n = world.omega_size() as Token;
        let ys: Vec<Option<Token>> = if self.spec.arity == 2 {
            (0..n).map(Some).collect()
        } else {
            vec![None]
        };
        let mut out = Vec::new();
        for x in 0..n {
            for &y in &ys {
                let sols = self.enumerate_solutions(world, x, y);
                if let [z] = sols[..] {
                    out.push(Candidate {
                        x,
                        y,
                        z,
                        disjuncts: self.satisfied_disjuncts(world, x, y.unwrap_or(0), z),
                    });
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::tasks::formula::builtin_task;

    #[test]
    fn identity_evaluation_and_inverse() {
        let w = WorldModel::sample(12, 4, 5).unwrap();
        let fe = BoundTask::new(builtin_task(0).unwrap(), vec![1], None, 0).unwrap();
        for x in 0..12 {
            assert_eq!(fe.enumerate_solutions(&w, x, None), vec![x]);
        }
        let inv = BoundTask::new(builtin_task(1).unwrap(), vec![3], None, 0).unwrap();
        for x in 0..12 {
            assert_eq!(inv.enumerate_solutions(&w, x, None), w.preimage(3, x).unwrap());
        }
    }

    #[test]
    fn default_pool_excludes_identity_and_pair() {
        let w = WorldModel::sample(10, 6, 1).unwrap();
        assert_eq!(BindingPolicy::default().pool(&w), vec![4, 5, 6]);
        let mut r = rng::stream(1, "t", 0);
        let b = BindingPolicy::recombined().draw(&w, 3, &mut r).unwrap();
        assert_eq!(&b[..2], &[2, 3]);
        assert!(b[2] >= 4);
        assert!(BindingPolicy::recombined().draw(&w, 1, &mut r).is_err());
    }
}
