//! Reverse-mode accumulation over a thread-local evaluation trace.
//!
//! Every arithmetic operation on [`Var`] appends one node to the tape of the
//! current thread, storing the indices of its operands together with the
//! local partial derivatives. [`gradient`] seeds the output adjoint and sweeps
//! the tape backwards once. Operations whose operands are all constants are
//! folded and never touch the tape.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::Real;

const CONSTANT: u32 = u32::MAX;

#[derive(Default)]
struct Tape {
    active: bool,
    // node i owns parents[offsets[i]..offsets[i + 1]]
    offsets: Vec<u32>,
    parents: Vec<u32>,
    partials: Vec<f64>,
}

impl Tape {
    fn reset(&mut self) {
        self.offsets.clear();
        self.parents.clear();
        self.partials.clear();
        self.offsets.push(0);
    }

    fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    #[inline]
    fn push_node(&mut self) -> u32 {
        let idx = self.len() as u32;
        self.offsets.push(self.parents.len() as u32);
        idx
    }

    #[inline]
    fn edge(&mut self, parent: u32, partial: f64) {
        if parent != CONSTANT {
            self.parents.push(parent);
            self.partials.push(partial);
        }
    }
}

thread_local! {
    static TAPE: RefCell<Tape> = RefCell::new(Tape::default());
}

/// A scalar whose history is recorded on the current thread's tape.
#[derive(Clone, Copy, Debug)]
pub struct Var {
    idx: u32,
    val: f64,
}

impl Var {
    #[inline]
    pub fn is_constant(self) -> bool {
        self.idx == CONSTANT
    }

    #[inline]
    fn unary(self, val: f64, partial: f64) -> Var {
        if self.is_constant() {
            return Var::constant(val);
        }
        TAPE.with(|t| {
            let mut t = t.borrow_mut();
            t.edge(self.idx, partial);
            let idx = t.push_node();
            Var { idx, val }
        })
    }

    #[inline]
    fn binary(a: Var, da: f64, b: Var, db: f64, val: f64) -> Var {
        if a.is_constant() && b.is_constant() {
            return Var::constant(val);
        }
        TAPE.with(|t| {
            let mut t = t.borrow_mut();
            t.edge(a.idx, da);
            t.edge(b.idx, db);
            let idx = t.push_node();
            Var { idx, val }
        })
    }

    fn leaf(val: f64) -> Var {
        TAPE.with(|t| {
            let mut t = t.borrow_mut();
            let idx = t.push_node();
            Var { idx, val }
        })
    }
}

impl Real for Var {
    #[inline]
    fn constant(v: f64) -> Self {
        Var {
            idx: CONSTANT,
            val: v,
        }
    }

    #[inline]
    fn value(self) -> f64 {
        self.val
    }

    #[inline]
    fn sqrt(self) -> Self {
        let r = self.val.sqrt();
        self.unary(r, 0.5 / r)
    }

    #[inline]
    fn tanh(self) -> Self {
        let t = self.val.tanh();
        self.unary(t, 1.0 - t * t)
    }

    #[inline]
    fn recip(self) -> Self {
        let r = 1.0 / self.val;
        self.unary(r, -r * r)
    }

    fn weighted_sum(terms: &[Self], weights: &[f64]) -> Self {
        debug_assert_eq!(terms.len(), weights.len());
        let val = terms.iter().zip(weights).map(|(t, w)| t.val * w).sum();
        if terms.iter().all(|t| t.is_constant()) {
            return Var::constant(val);
        }
        TAPE.with(|t| {
            let mut t = t.borrow_mut();
            for (v, w) in terms.iter().zip(weights) {
                if *w != 0.0 {
                    t.edge(v.idx, *w);
                }
            }
            let idx = t.push_node();
            Var { idx, val }
        })
    }

    fn dot(a: &[Self], b: &[Self]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        let val = a.iter().zip(b).map(|(x, y)| x.val * y.val).sum();
        if a.iter().chain(b).all(|v| v.is_constant()) {
            return Var::constant(val);
        }
        TAPE.with(|t| {
            let mut t = t.borrow_mut();
            for (x, y) in a.iter().zip(b) {
                t.edge(x.idx, y.val);
                t.edge(y.idx, x.val);
            }
            let idx = t.push_node();
            Var { idx, val }
        })
    }
}

impl Add for Var {
    type Output = Var;
    #[inline]
    fn add(self, rhs: Var) -> Var {
        Var::binary(self, 1.0, rhs, 1.0, self.val + rhs.val)
    }
}

impl Sub for Var {
    type Output = Var;
    #[inline]
    fn sub(self, rhs: Var) -> Var {
        Var::binary(self, 1.0, rhs, -1.0, self.val - rhs.val)
    }
}

impl Mul for Var {
    type Output = Var;
    #[inline]
    fn mul(self, rhs: Var) -> Var {
        Var::binary(self, rhs.val, rhs, self.val, self.val * rhs.val)
    }
}

impl Div for Var {
    type Output = Var;
    #[inline]
    fn div(self, rhs: Var) -> Var {
        let inv = 1.0 / rhs.val;
        let q = self.val * inv;
        Var::binary(self, inv, rhs, -q * inv, q)
    }
}

impl Neg for Var {
    type Output = Var;
    #[inline]
    fn neg(self) -> Var {
        self.unary(-self.val, -1.0)
    }
}

impl Add<f64> for Var {
    type Output = Var;
    #[inline]
    fn add(self, rhs: f64) -> Var {
        self.unary(self.val + rhs, 1.0)
    }
}

impl Sub<f64> for Var {
    type Output = Var;
    #[inline]
    fn sub(self, rhs: f64) -> Var {
        self.unary(self.val - rhs, 1.0)
    }
}

impl Mul<f64> for Var {
    type Output = Var;
    #[inline]
    fn mul(self, rhs: f64) -> Var {
        self.unary(self.val * rhs, rhs)
    }
}

impl Div<f64> for Var {
    type Output = Var;
    #[inline]
    fn div(self, rhs: f64) -> Var {
        self.unary(self.val / rhs, 1.0 / rhs)
    }
}

/// Evaluates `f` on tape variables seeded with `inputs` and returns the
/// output value and its gradient with respect to every input.
///
/// The tape is thread-local, so independent calls may run concurrently on
/// different threads. Calls must not be nested on the same thread.
pub fn gradient<F>(inputs: &[f64], f: F) -> (f64, Vec<f64>)
where
    F: FnOnce(&[Var]) -> Var,
{
    TAPE.with(|t| {
        let mut t = t.borrow_mut();
        assert!(!t.active, "nested reverse-mode evaluation on one thread");
        t.active = true;
        t.reset();
    });
    let vars: Vec<Var> = inputs.iter().map(|&x| Var::leaf(x)).collect();
    let out = f(&vars);
    let grad = TAPE.with(|t| {
        let mut t = t.borrow_mut();
        let n_inputs = inputs.len();
        let grad = if out.is_constant() {
            vec![0.0; n_inputs]
        } else {
            let mut adj = vec![0.0; t.len()];
            adj[out.idx as usize] = 1.0;
            for node in (0..=out.idx as usize).rev() {
                let a = adj[node];
                if a == 0.0 {
                    continue;
                }
                let (lo, hi) = (t.offsets[node] as usize, t.offsets[node + 1] as usize);
                for e in lo..hi {
                    adj[t.parents[e] as usize] += a * t.partials[e];
                }
            }
            adj.truncate(n_inputs);
            adj
        };
        t.reset();
        t.active = false;
        grad
    });
    (out.val, grad)
}

/// Number of nodes currently recorded on this thread's tape.
pub fn tape_len() -> usize {
    TAPE.with(|t| {
        let t = t.borrow();
        t.offsets.len().saturating_sub(1)
    })
}
