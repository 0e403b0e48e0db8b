use std::collections::HashSet;

use scriptworld::grammar::express::TwoLiteralTerm;
use scriptworld::grammar::*;
use scriptworld::{Token, WorldModel};

/// Walks the AST alongside the trace, checking every event against the
/// world and the current bindings.
pub struct Replay<'a> {
    world: &'a WorldModel,
    arity: usize,
    events: std::slice::Iter<'a, TraceEvent>,
    env: Vec<Token>,
    out: Vec<Token>,
}

impl Replay<'_> {
    fn holds(&self, c: &Condition) -> bool {
        self.world.eval(c.function, self.env[c.arg]) == self.env[c.result]
    }

    fn block(&mut self, b: &Block) {
        for c in &b.0 {
            self.command(c);
        }
    }

    fn command(&mut self, c: &Command) {
        match c {
            Command::Print(v) => {
                let Some(TraceEvent::Print(t)) = self.events.next() else {
                    panic!("expected a print event")
                };
                assert_eq!(*t, self.env[*v]);
                self.out.push(*t);
            }
            Command::If {
                condition,
                then_block,
                else_block,
            } => {
                let Some(TraceEvent::Branch(taken)) = self.events.next() else {
                    panic!("expected a branch event")
                };
                assert_eq!(*taken, self.holds(condition));
                self.block(if *taken { then_block } else { else_block });
            }
            Command::Loop { body } => {
                let Some(TraceEvent::LoopValues(vs)) = self.events.next() else {
                    panic!("expected loop values")
                };
                assert_eq!(vs.len(), self.arity);
                assert_eq!(vs.iter().collect::<HashSet<_>>().len(), vs.len());
                for &v in vs {
                    assert!((v as usize) < self.world.omega_size());
                    self.env.push(v);
                    self.block(body);
                    self.env.pop();
                }
            }
            Command::ForSome { condition, body } => {
                let Some(TraceEvent::Bind(bound)) = self.events.next() else {
                    panic!("expected a bind event")
                };
                let mut sat = Vec::new();
                for z in 0..self.world.omega_size() as Token {
                    self.env.push(z);
                    if self.holds(condition) {
                        sat.push(z);
                    }
                    self.env.pop();
                }
                match bound {
                    None => assert!(sat.is_empty()),
                    Some(z) => {
                        assert!(sat.contains(z));
                        self.env.push(*z);
                        self.block(body);
                        self.env.pop();
                    }
                }
            }
        }
    }
}

pub fn replay_check(ast: &ScriptAst, world: &WorldModel, bindings: &[Token], seed: u64) {
    let (tokens, trace) = execute_traced(ast, world, bindings, seed);
    let mut r = Replay {
        world,
        arity: world.omega_size().min(10),
        events: trace.iter(),
        env: bindings.to_vec(),
        out: Vec::new(),
    };
    r.command(&ast.root);
    assert!(r.events.next().is_none(), "unconsumed trace events");
    assert_eq!(r.out, tokens);
}


pub fn dnf_terms(d: usize) -> Vec<TwoLiteralTerm> {
    (0..d)
        .map(|i| TwoLiteralTerm {
            intro_function: 2 + i % 3,
            intro_input: i % 2,
            z_is_result: i % 2 == 0,
            check_function: 2 + (i + 1) % 3,
            check_input: (i + 1) % 2,
            z_is_check_arg: i % 3 != 1,
        })
        .collect()
}

pub fn term_holds(world: &WorldModel, t: &TwoLiteralTerm, inputs: &[Token], z: Token) -> bool {
    let x = inputs[t.intro_input];
    let intro = if t.z_is_result {
        world.eval(t.intro_function, x) == z
    } else {
        world.eval(t.intro_function, z) == x
    };
    let y = inputs[t.check_input];
    let check = if t.z_is_check_arg {
        world.eval(t.check_function, z) == y
    } else {
        world.eval(t.check_function, y) == z
    };
    intro && check
}
