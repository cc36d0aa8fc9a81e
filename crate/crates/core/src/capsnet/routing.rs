//! Dynamic routing from the stacked input capsules to the class capsules.

use crate::error::Result;
use crate::numerics::{dot, squash_factor, Tape, Tensor, Var};

/// `(‖s‖² / (1 + ‖s‖²)) · s / ‖s‖`, zero for `‖s‖ < 1e-12`.
pub fn squash(s: &[f64]) -> Vec<f64> {
    let f = squash_factor(dot(s, s).sqrt());
    s.iter().map(|v| v * f).collect()
}

/// Everything routing computed for one input, copied off the tape.
#[derive(Clone, Debug, PartialEq)]
pub struct RoutingTrace {
    /// Predictions `Û` as `3N × K × d_k`.
    pub votes: Tensor,
    /// Logits `a` (`3N × K`): entry `r` is the state before iteration `r`, the last one after the final update.
    pub logits: Vec<Tensor>,
    /// Couplings `α` (`3N × K`) used in each iteration.
    pub couplings: Vec<Tensor>,
    /// Agreements `⟨Û_{i,k}, v_k⟩` added to the logits in each iteration.
    pub agreements: Vec<Tensor>,
    /// Class capsules `v` (`K × d_k`) produced by each iteration.
    pub class_capsules: Vec<Tensor>,
    /// Pre-squash `s` of the last iteration.
    pub final_s: Tensor,
}

impl RoutingTrace {
    pub fn iterations(&self) -> usize {
        self.couplings.len()
    }

    /// Final class capsules.
    pub fn output(&self) -> &Tensor {
        self.class_capsules.last().expect("at least one iteration")
    }

    /// Couplings of the final iteration.
    pub fn final_couplings(&self) -> &Tensor {
        self.couplings.last().expect("at least one iteration")
    }
}

/// Routing recorded on a tape; every field indexes into that tape.
#[derive(Clone, Debug)]
pub struct RoutingVars {
    pub votes: Var,
    pub logits: Vec<Var>,
    pub couplings: Vec<Var>,
    pub agreements: Vec<Var>,
    pub class_capsules: Vec<Var>,
    pub final_s: Var,
}

impl RoutingVars {
    pub fn output(&self) -> Var {
        *self.class_capsules.last().expect("at least one iteration")
    }

    pub fn trace(&self, tape: &Tape<'_>) -> RoutingTrace {
        let grab = |vars: &[Var]| vars.iter().map(|&v| tape.value(v).clone()).collect();
        RoutingTrace {
            votes: tape.value(self.votes).clone(),
            logits: grab(&self.logits),
            couplings: grab(&self.couplings),
            agreements: grab(&self.agreements),
            class_capsules: grab(&self.class_capsules),
            final_s: tape.value(self.final_s).clone(),
        }
    }
}

/// Records `iters` routing iterations over `capsules` (`M × d_i`) with the
/// per-pair transforms `weights` (`M × K × d_i × d_k`).
///
/// With `detach_couplings` the couplings are treated as constants in the
/// backward pass; the forward values are unchanged.
pub fn route_on_tape(
    tape: &mut Tape<'_>,
    capsules: Var,
    weights: Var,
    iters: usize,
    detach_couplings: bool,
) -> Result<RoutingVars> {
    let votes = tape.capsule_votes(capsules, weights)?;
    let shape = tape.value(votes).shape().to_vec();
    let (m, k) = (shape[0], shape[1]);

    let mut logits = vec![tape.constant(Tensor::zeros(&[m, k]))];
    let mut couplings = Vec::with_capacity(iters);
    let mut agreements = Vec::with_capacity(iters);
    let mut class_capsules = Vec::with_capacity(iters);
    let mut final_s = votes;
    for _ in 0..iters {
        let a = *logits.last().expect("seeded");
        let a = if detach_couplings { tape.detach(a) } else { a };
        let alpha = tape.softmax(a, 1)?;
        let s = tape.weighted_votes(alpha, votes)?;
        let v = tape.squash_rows(s)?;
        let agree = tape.agreement(votes, v)?;
        let next = tape.add(a, agree)?;
        couplings.push(alpha);
        agreements.push(agree);
        class_capsules.push(v);
        logits.push(next);
        final_s = s;
    }
    Ok(RoutingVars {
        votes,
        logits,
        couplings,
        agreements,
        class_capsules,
        final_s,
    })
}

/// Plain evaluation of [`route_on_tape`].
pub fn route(capsules: &Tensor, weights: &Tensor, iters: usize) -> Result<RoutingTrace> {
    let mut tape = Tape::new();
    let c = tape.constant_ref(capsules);
    let w = tape.constant_ref(weights);
    let vars = route_on_tape(&mut tape, c, w, iters, false)?;
    Ok(vars.trace(&tape))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::l2_norm;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
    }

    #[test]
    fn squash_closed_forms() {
        assert_eq!(squash(&[0.0; 5]), vec![0.0; 5]);
        let v = squash(&[0.6, 0.8]);
        assert!((l2_norm(&v) - 0.5).abs() < 1e-12);
        assert!((v[0] / v[1] - 0.75).abs() < 1e-12);
        let v = squash(&[6.0, 0.0, 8.0]);
        assert!((l2_norm(&v) - 100.0 / 101.0).abs() < 1e-12);
        assert_eq!(v[1], 0.0);
        assert_eq!(squash(&[1e-13, 0.0]), vec![0.0, 0.0]);
    }

    /// Algorithm 1 with scalar loops and no shared code.
    fn scalar_routing(c: &[Vec<f64>], w: &[Vec<Vec<Vec<f64>>>], iters: usize) -> Vec<Vec<f64>> {
        let m = c.len();
        let k = w[0].len();
        let dk = w[0][0][0].len();
        let mut a = vec![vec![0.0f64; k]; m];
        let mut v = vec![vec![0.0; dk]; k];
        for _ in 0..iters {
            // recompute predictions every iteration, as written
            let mut u = vec![vec![vec![0.0; dk]; k]; m];
            for i in 0..m {
                for kk in 0..k {
                    for col in 0..dk {
                        for (row, &x) in c[i].iter().enumerate() {
                            u[i][kk][col] += x * w[i][kk][row][col];
                        }
                    }
                }
            }
            let mut alpha = vec![vec![0.0; k]; m];
            for i in 0..m {
                let z: f64 = a[i].iter().map(|x| x.exp()).sum();
                for kk in 0..k {
                    alpha[i][kk] = a[i][kk].exp() / z;
                }
            }
            for kk in 0..k {
                let mut s = vec![0.0; dk];
                for i in 0..m {
                    for col in 0..dk {
                        s[col] += alpha[i][kk] * u[i][kk][col];
                    }
                }
                let n2: f64 = s.iter().map(|x| x * x).sum();
                let n = n2.sqrt();
                v[kk] = s.iter().map(|x| n2 / (1.0 + n2) * x / n).collect();
            }
            for i in 0..m {
                for kk in 0..k {
                    let mut g = 0.0;
                    for col in 0..dk {
                        g += u[i][kk][col] * v[kk][col];
                    }
                    a[i][kk] += g;
                }
            }
        }
        v
    }

    #[test]
    fn matches_scalar_algorithm() {
        // three modalities with one capsule each, d_i = d_k = 2
        let c = vec![vec![0.5, -1.0], vec![1.5, 0.25], vec![-0.75, 2.0]];
        let mut w = vec![vec![vec![vec![0.0; 2]; 2]; 2]; 3];
        let mut x = 0.1;
        for per_input in &mut w {
            for per_class in per_input.iter_mut() {
                for row in per_class.iter_mut() {
                    for e in row.iter_mut() {
                        x = (x * 7.3 + 0.37) % 2.0 - 1.0;
                        *e = x;
                    }
                }
            }
        }
        let expected = scalar_routing(&c, &w, 3);

        let ct = Tensor::matrix(3, 2, c.concat());
        let wt = Tensor::new(vec![3, 2, 2, 2], w.concat().concat().concat()).unwrap();
        let trace = route(&ct, &wt, 3).unwrap();
        let got = trace.output();
        for kk in 0..2 {
            for col in 0..2 {
                assert!((got.row(kk)[col] - expected[kk][col]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn first_iteration_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = random(&mut rng, &[6, 3], 1.0);
        let w = random(&mut rng, &[6, 2, 3, 4], 1.0);
        let trace = route(&c, &w, 1).unwrap();
        assert!(trace.couplings[0].data().iter().all(|&a| a == 0.5));
        for kk in 0..2 {
            let mut s = vec![0.0; 4];
            for i in 0..6 {
                let off = (i * 2 + kk) * 4;
                for (o, u) in s.iter_mut().zip(&trace.votes.data()[off..off + 4]) {
                    *o += 0.5 * u;
                }
            }
            let v = squash(&s);
            let err = v.iter().zip(trace.output().row(kk)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-12);
        }
    }

    #[test]
    fn zero_votes_keep_logits_at_zero() {
        let c = Tensor::zeros(&[4, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = random(&mut rng, &[4, 2, 2, 3], 1.0);
        let trace = route(&c, &w, 3).unwrap();
        assert!(trace.class_capsules.iter().all(|v| v.data().iter().all(|&x| x == 0.0)));
        assert!(trace.logits.iter().all(|a| a.data().iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn detaching_couplings_keeps_forward_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = random(&mut rng, &[6, 3], 1.0);
        let w = random(&mut rng, &[6, 2, 3, 4], 1.0);
        let mut tape = Tape::new();
        let (cv, wv) = (tape.constant_ref(&c), tape.param_ref(&w));
        let a = route_on_tape(&mut tape, cv, wv, 3, true).unwrap().trace(&tape);
        assert_eq!(a, route(&c, &w, 3).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn routing_invariants(seed in any::<u64>(), iters in 1usize..5, scale in 0.01f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = random(&mut rng, &[9, 4], scale);
            let w = random(&mut rng, &[9, 2, 4, 5], scale);
            let trace = route(&c, &w, iters).unwrap();
            prop_assert_eq!(trace.logits.len(), iters + 1);
            for r in 0..iters {
                for i in 0..9 {
                    let row = trace.couplings[r].row(i);
                    prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                    for kk in 0..2 {
                        let before = trace.logits[r].row(i)[kk];
                        let after = trace.logits[r + 1].row(i)[kk];
                        prop_assert_eq!(after, before + trace.agreements[r].row(i)[kk]);
                    }
                }
                for kk in 0..2 {
                    let n = l2_norm(trace.class_capsules[r].row(kk));
                    prop_assert!((0.0..1.0).contains(&n));
                }
            }
        }
    }
}
