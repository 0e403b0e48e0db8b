use serde::{Deserialize, Serialize};

/// Formula variables: inputs `x`, `y`, output `z`, existential `a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Var {
    X,
    Y,
    Z,
    A,
}

/// Function slots `i`, `j`, `k`, `l`.
pub type Slot = usize;
pub const I: Slot = 0;
pub const J: Slot = 1;
pub const K: Slot = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Literal {
    /// `f_slot(arg) = result`.
    FuncEq { slot: Slot, arg: Var, result: Var },
    /// `z = ℓ_label`, label 0 or 1.
    LabelEq { label: usize },
}

impl Literal {
    pub fn mentions(&self, v: Var) -> bool {
        match *self {
            Literal::FuncEq { arg, result, .. } => arg == v || result == v,
            Literal::LabelEq { .. } => v == Var::Z,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskGroup {
    FunctionEvaluation,
    Propositional,
    Composed,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: usize,
    pub name: String,
    pub arity: usize,
    /// Disjunctive normal form.
    pub disjuncts: Vec<Vec<Literal>>,
    pub group: TaskGroup,
}

impl TaskSpec {
    pub fn has_existential(&self) -> bool {
        self.disjuncts.iter().flatten().any(|l| l.mentions(Var::A))
    }

    pub fn num_function_slots(&self) -> usize {
        self.disjuncts
            .iter()
            .flatten()
            .filter_map(|l| match *l {
                Literal::FuncEq { slot, .. } => Some(slot + 1),
                Literal::LabelEq { .. } => None,
            })
            .max()
            .unwrap_or(0)
    }

    pub fn num_literals(&self) -> usize {
        self.disjuncts.iter().map(Vec::len).sum()
    }

    pub fn is_binary(&self) -> bool {
        self.group == TaskGroup::Binary
    }

    /// Structural checks: `z` in every disjunct, at most three literals per
    /// disjunct, labels only in binary tasks, `y` present iff arity 2.
    pub fn check(&self) -> Result<(), String> {
        for (n, d) in self.disjuncts.iter().enumerate() {
            if !d.iter().any(|l| l.mentions(Var::Z)) {
                return Err(format!("disjunct {n} lacks z"));
            }
            if d.len() > 3 {
                return Err(format!("disjunct {n} has {} literals", d.len()));
            }
            if !self.is_binary() && d.iter().any(|l| matches!(l, Literal::LabelEq { .. })) {
                return Err("label literal outside a binary task".into());
            }
        }
        let uses_y = self.disjuncts.iter().flatten().any(|l| l.mentions(Var::Y));
        if uses_y != (self.arity == 2) {
            return Err("arity does not match use of y".into());
        }
        Ok(())
    }
}

fn f(slot: Slot, arg: Var, result: Var) -> Literal {
    Literal::FuncEq { slot, arg, result }
}

fn label(label: usize) -> Literal {
    Literal::LabelEq { label }
}

fn task(task_id: usize, name: &str, arity: usize, group: TaskGroup, disjuncts: Vec<Vec<Literal>>) -> TaskSpec {
    TaskSpec {
        task_id,
        name: name.to_string(),
        arity,
        disjuncts,
        group,
    }
}

/// Tasks 0 (function evaluation) through 15.
pub fn builtin_tasks() -> Vec<TaskSpec> {
    use TaskGroup::*;
    use Var::*;
    vec![
        task(0, "FunctionEvaluation", 1, FunctionEvaluation, vec![vec![f(I, X, Z)]]),
        task(1, "Inverse", 1, Propositional, vec![vec![f(I, Z, X)]]),
        task(
            2,
            "MissingLink",
            2,
            Propositional,
            vec![vec![f(I, X, Z), f(J, Z, Y)], vec![f(I, Y, Z), f(J, Z, X)]],
        ),
        task(
            3,
            "Task3",
            2,
            Propositional,
            vec![vec![f(I, X, Z), f(I, Z, Y)], vec![f(J, Z, X), f(J, Z, Y)]],
        ),
        task(
            4,
            "Task4",
            2,
            Propositional,
            vec![vec![f(I, X, Z), f(J, Z, Y)], vec![f(I, X, Y), f(J, X, Z)]],
        ),
        task(
            5,
            "Task5",
            2,
            Propositional,
            vec![vec![f(I, X, Z), f(I, Z, Y)], vec![f(J, X, Y), f(J, Z, X)]],
        ),
        task(
            6,
            "Task6",
            2,
            Propositional,
            vec![vec![f(I, X, Z), f(J, Z, Y)], vec![f(I, Z, X), f(J, Y, Z)]],
        ),
        task(
            7,
            "Task7",
            2,
            Propositional,
            vec![vec![f(I, X, Z), f(J, Z, Y)], vec![f(I, Z, X), f(K, Z, Y)]],
        ),
        task(
            8,
            "Task8",
            2,
            Propositional,
            vec![
                vec![f(I, X, Z), f(J, Y, X)],
                vec![f(I, Z, X), f(J, X, Y)],
                vec![f(J, Y, Z), f(K, Y, X)],
                vec![f(J, Z, Y), f(K, X, Y)],
            ],
        ),
        task(
            9,
            "Task9",
            2,
            Propositional,
            vec![
                vec![f(K, X, Z), f(J, Y, X)],
                vec![f(I, X, Z), f(K, X, Y)],
                vec![f(I, Z, X), f(K, Y, X)],
                vec![f(J, Z, Y), f(I, Y, X)],
            ],
        ),
        task(
            10,
            "Task10",
            2,
            Propositional,
            vec![
                vec![f(I, X, Z), f(J, Y, X)],
                vec![f(I, Z, X), f(J, X, Y)],
                vec![f(I, Y, Z), f(K, Y, X)],
                vec![f(I, Z, Y), f(K, X, Y)],
            ],
        ),
        task(11, "Composition", 1, Composed, vec![vec![f(I, X, A), f(J, A, Z)]]),
        task(
            12,
            "Task12",
            2,
            Composed,
            vec![
                vec![f(I, X, Z), f(J, A, Y), f(K, Z, A)],
                vec![f(I, Z, X), f(J, A, Z), f(K, Y, A)],
            ],
        ),
        task(
            13,
            "RelationClassification",
            2,
            Binary,
            vec![vec![f(I, X, Y), label(0)], vec![f(J, X, Y), label(1)]],
        ),
        task(
            14,
            "Task14",
            2,
            Binary,
            vec![vec![f(I, X, Y), label(0)], vec![f(I, Y, X), label(1)]],
        ),
        task(
            15,
            "Task15",
            2,
            Binary,
            vec![vec![f(I, X, Y), label(0)], vec![f(I, A, X), f(I, Y, A), label(1)]],
        ),
    ]
}

pub fn builtin_task(task_id: usize) -> Option<TaskSpec> {
    builtin_tasks().into_iter().find(|t| t.task_id == task_id)
}

/// The literal-count grouping used as a description-length proxy for the
/// function-evaluation and propositional tasks (1, 4 or 8 literals).
pub fn literal_group(task_id: usize) -> Option<usize> {
    match task_id {
        0 | 1 => Some(1),
        2..=7 => Some(4),
        8..=10 => Some(8),
        _ => None,
    }
}
