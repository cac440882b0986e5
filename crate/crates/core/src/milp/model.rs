use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectiveSense {
    Minimize,
    Maximize,
}

/// Linear constraint `sum terms (sense) rhs`. Terms are sorted by variable
/// index with duplicates merged and zeros dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Row {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let a = self.activity(x);
        match self.sense {
            Sense::Le => (a - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - a).max(0.0),
            Sense::Eq => (a - self.rhs).abs(),
        }
    }
}

pub type VarId = usize;

/// Variables, sparse rows and a linear objective with a constant term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpModel {
    pub name: String,
    pub sense: ObjectiveSense,
    pub vars: Vec<Variable>,
    pub rows: Vec<Row>,
    pub objective: Vec<f64>,
    pub objective_constant: f64,
}

impl Default for MilpModel {
    fn default() -> Self {
        MilpModel::new("model")
    }
}

impl MilpModel {
    pub fn new(name: &str) -> Self {
        MilpModel {
            name: name.to_string(),
            sense: ObjectiveSense::Minimize,
            vars: Vec::new(),
            rows: Vec::new(),
            objective: Vec::new(),
            objective_constant: 0.0,
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, kind: VarKind, lower: f64, upper: f64) -> VarId {
        let (lower, upper) = match kind {
            VarKind::Binary => (lower.max(0.0), upper.min(1.0)),
            VarKind::Continuous => (lower, upper),
        };
        self.vars.push(Variable { name: name.into(), kind, lower, upper });
        self.objective.push(0.0);
        self.vars.len() - 1
    }

    pub fn binary(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name, VarKind::Binary, 0.0, 1.0)
    }

    pub fn continuous(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.add_var(name, VarKind::Continuous, lower, upper)
    }

    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        terms: impl IntoIterator<Item = (VarId, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> usize {
        let mut terms: Vec<(usize, f64)> = terms.into_iter().collect();
        terms.sort_by_key(|t| t.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
        for (j, a) in terms {
            debug_assert!(j < self.vars.len(), "row references unregistered variable");
            match merged.last_mut() {
                Some(last) if last.0 == j => last.1 += a,
                _ => merged.push((j, a)),
            }
        }
        merged.retain(|t| t.1 != 0.0);
        self.rows.push(Row { name: name.into(), terms: merged, sense, rhs });
        self.rows.len() - 1
    }

    pub fn set_objective(&mut self, var: VarId, coef: f64) {
        self.objective[var] = coef;
    }

    pub fn add_objective(&mut self, var: VarId, coef: f64) {
        self.objective[var] += coef;
    }

    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn binaries(&self) -> impl Iterator<Item = VarId> + '_ {
        self.vars.iter().enumerate().filter(|(_, v)| v.kind == VarKind::Binary).map(|(j, _)| j)
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective_constant + self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Largest row violation, bound violation or integrality gap of `x`.
    pub fn max_violation(&self, x: &[f64]) -> Violation {
        let mut worst = Violation::default();
        for (j, v) in self.vars.iter().enumerate() {
            let b = (v.lower - x[j]).max(x[j] - v.upper).max(0.0);
            if b > worst.amount {
                worst = Violation { amount: b, what: format!("bounds of `{}`", v.name) };
            }
            if v.kind == VarKind::Binary {
                let frac = (x[j] - x[j].round()).abs();
                if frac > worst.amount {
                    worst = Violation { amount: frac, what: format!("integrality of `{}`", v.name) };
                }
            }
        }
        for r in &self.rows {
            let viol = r.violation(x);
            if viol > worst.amount {
                worst = Violation { amount: viol, what: format!("row `{}`", r.name) };
            }
        }
        worst
    }

    /// First row, bound or integrality requirement violated by more than `tol`.
    pub fn first_violation(&self, x: &[f64], tol: f64) -> Option<Violation> {
        for (j, v) in self.vars.iter().enumerate() {
            let b = (v.lower - x[j]).max(x[j] - v.upper);
            if b > tol {
                return Some(Violation { amount: b, what: format!("bounds of `{}`", v.name) });
            }
            if v.kind == VarKind::Binary && (x[j] - x[j].round()).abs() > tol {
                return Some(Violation { amount: (x[j] - x[j].round()).abs(), what: format!("integrality of `{}`", v.name) });
            }
        }
        self.rows.iter().find_map(|r| {
            let viol = r.violation(x);
            (viol > tol).then(|| Violation { amount: viol, what: format!("row `{}`", r.name) })
        })
    }

    pub fn var_index(&self, name: &str) -> Option<VarId> {
        self.vars.iter().position(|v| v.name == name)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Violation {
    pub amount: f64,
    pub what: String,
}
