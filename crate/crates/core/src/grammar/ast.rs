use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::world::WorldModel;

/// Maximum number of commands in a block.
pub const MAX_BLOCK_LEN: usize = 10;

/// A variable, identified by the level of its binder: `x0` is bound by the
/// outermost binder (or is the first free variable), `x1` by the next, and
/// so on. Sibling binders at the same depth reuse the same name.
pub type Var = usize;

/// `f(arg) = result`; `function` is one-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Condition {
    pub function: usize,
    pub arg: Var,
    pub result: Var,
}

impl Condition {
    pub fn new(function: usize, arg: Var, result: Var) -> Self {
        Condition {
            function,
            arg,
            result,
        }
    }

    pub fn mentions(&self, v: Var) -> bool {
        self.arg == v || self.result == v
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Command {
    Print(Var),
    If {
        condition: Condition,
        then_block: Block,
        else_block: Block,
    },
    /// Binds the next variable level to each of `min(10, |Ω|)` random objects.
    Loop { body: Block },
    /// Binds the next variable level to a random object satisfying `condition`.
    ForSome { condition: Condition, body: Block },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Block(pub Vec<Command>);

/// A document script, or a fragment of one with `free_vars` unbound
/// variables `x0..x{free_vars-1}` supplied at execution time.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ScriptAst {
    pub free_vars: usize,
    pub root: Command,
}

impl Command {
    pub fn print(v: Var) -> Self {
        Command::Print(v)
    }

    pub fn looped(body: Vec<Command>) -> Self {
        Command::Loop { body: Block(body) }
    }

    pub fn for_some(condition: Condition, body: Vec<Command>) -> Self {
        Command::ForSome {
            condition,
            body: Block(body),
        }
    }

    pub fn if_else(condition: Condition, then_block: Vec<Command>, else_block: Vec<Command>) -> Self {
        Command::If {
            condition,
            then_block: Block(then_block),
            else_block: Block(else_block),
        }
    }

    /// Node count of the derivation tree rooted here: one node per command
    /// and one per block.
    pub fn description_length(&self) -> usize {
        match self {
            Command::Print(_) => 1,
            Command::If {
                then_block,
                else_block,
                ..
            } => 1 + then_block.description_length() + else_block.description_length(),
            Command::Loop { body } | Command::ForSome { body, .. } => {
                1 + body.description_length()
            }
        }
    }

    fn collect_functions(&self, out: &mut BTreeSet<usize>) {
        match self {
            Command::Print(_) => {}
            Command::If {
                condition,
                then_block,
                else_block,
            } => {
                out.insert(condition.function);
                then_block.collect_functions(out);
                else_block.collect_functions(out);
            }
            Command::Loop { body } => body.collect_functions(out),
            Command::ForSome { condition, body } => {
                out.insert(condition.function);
                body.collect_functions(out);
            }
        }
    }

    fn check_scope(&self, bound: usize) -> std::result::Result<(), String> {
        let in_scope = |v: Var| {
            if v < bound {
                Ok(())
            } else {
                Err(format!("x{v}"))
            }
        };
        match self {
            Command::Print(v) => in_scope(*v),
            Command::If {
                condition,
                then_block,
                else_block,
            } => {
                in_scope(condition.arg)?;
                in_scope(condition.result)?;
                then_block.check_scope(bound)?;
                else_block.check_scope(bound)
            }
            Command::Loop { body } => body.check_scope(bound + 1),
            Command::ForSome { condition, body } => {
                let new = bound;
                let old = match (condition.arg == new, condition.result == new) {
                    (true, false) => condition.result,
                    (false, true) => condition.arg,
                    _ => {
                        return Err(format!(
                            "FOR SOME condition must mention x{new} exactly once"
                        ))
                    }
                };
                in_scope(old)?;
                body.check_scope(bound + 1)
            }
        }
    }
}

impl Block {
    pub fn description_length(&self) -> usize {
        1 + self.0.iter().map(Command::description_length).sum::<usize>()
    }

    fn collect_functions(&self, out: &mut BTreeSet<usize>) {
        for c in &self.0 {
            c.collect_functions(out);
        }
    }

    fn check_scope(&self, bound: usize) -> std::result::Result<(), String> {
        if self.0.is_empty() || self.0.len() > MAX_BLOCK_LEN {
            return Err(format!(
                "block length {} outside 1..={MAX_BLOCK_LEN}",
                self.0.len()
            ));
        }
        self.0.iter().try_for_each(|c| c.check_scope(bound))
    }
}

impl ScriptAst {
    /// A closed document script.
    pub fn document(root: Command) -> Self {
        ScriptAst { free_vars: 0, root }
    }

    pub fn fragment(free_vars: usize, root: Command) -> Self {
        ScriptAst { free_vars, root }
    }

    pub fn description_length(&self) -> usize {
        self.root.description_length()
    }

    /// Function indices mentioned in any condition.
    pub fn uses_functions(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.root.collect_functions(&mut out);
        out
    }

    pub fn uses_both(&self, pair: (usize, usize)) -> bool {
        let used = self.uses_functions();
        used.contains(&pair.0) && used.contains(&pair.1)
    }

    /// Structural invariants: scoping, FOR SOME shape, block lengths.
    pub fn validate(&self) -> Result<()> {
        self.root
            .check_scope(self.free_vars)
            .map_err(Error::Validation)
    }

    /// Structural invariants plus function indices within the world.
    pub fn validate_for(&self, world: &WorldModel) -> Result<()> {
        self.validate()?;
        match self.uses_functions().iter().find(|&&f| f < 1 || f > world.num_functions()) {
            Some(f) => Err(Error::Validation(format!(
                "function f{f} not defined in a world with {} functions",
                world.num_functions()
            ))),
            None => Ok(()),
        }
    }
}
