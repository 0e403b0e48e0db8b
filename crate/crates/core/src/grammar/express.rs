//! Scripts that express test tasks, used to bound their description length.

use super::ast::{Block, Command, Condition, ScriptAst, Var};

/// One two-literal conjunct relating the inputs to the output `z`:
/// the first literal introduces `z` from an input, the second checks `z`
/// against an input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TwoLiteralTerm {
    pub intro_function: usize,
    pub intro_input: Var,
    /// `f(input) = z` when true, `f(z) = input` otherwise.
    pub z_is_result: bool,
    pub check_function: usize,
    pub check_input: Var,
    /// `g(z) = input` when true, `g(input) = z` otherwise.
    pub z_is_check_arg: bool,
}

/// Expresses a 2-DNF over free inputs `x0..x{inputs-1}` as a chain of
/// FOR SOME statements, each guarded by an IF that falls through to the
/// next disjunct. The last disjunct is unguarded. Uses `d` FOR SOME, `d-1`
/// IF, `d` PRINT and `3d-2` blocks: `6d-3` nodes.
pub fn express_two_dnf(inputs: usize, terms: &[TwoLiteralTerm]) -> ScriptAst {
    assert!(!terms.is_empty(), "a DNF needs at least one disjunct");
    ScriptAst::fragment(inputs, chain(inputs, terms))
}

fn chain(level: usize, terms: &[TwoLiteralTerm]) -> Command {
    let t = terms[0];
    let z = level;
    let intro = if t.z_is_result {
        Condition::new(t.intro_function, t.intro_input, z)
    } else {
        Condition::new(t.intro_function, z, t.intro_input)
    };
    let body = if terms.len() == 1 {
        vec![Command::Print(z)]
    } else {
        let check = if t.z_is_check_arg {
            Condition::new(t.check_function, z, t.check_input)
        } else {
            Condition::new(t.check_function, t.check_input, z)
        };
        vec![Command::if_else(
            check,
            vec![Command::Print(z)],
            vec![chain(level + 1, &terms[1..])],
        )]
    };
    Command::for_some(intro, body)
}

/// Wraps a block in a LOOP: one more node, ten bindings-varied repetitions.
pub fn loop_over(body: Block) -> Command {
    Command::Loop { body }
}
