//! Gated recurrent cells (LSTM, aspect-aware LSTM, GRU) with hand-derived
//! backward passes, sequence runners and pooling.

mod gru;
mod lstm;
mod sequence;

pub(crate) use gru::{gru_backward, gru_forward, GruCache};
pub use gru::{gru_step, GruParams};
pub use lstm::{aalstm_step, lstm_step, AalstmParams, Cell, LstmParams, RnnState, INIT_SCALE};
pub use sequence::{
    pool, pool_backward, run_bidirectional, run_sequence, CellKind, EncoderCache, EncoderGrads, PoolMode, RecurrentEncoder,
    SequenceOutput,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{check_params, Matrix, ParamTensor, Rng, Vector};

    fn zero_lstm(dx: usize, dc: usize) -> LstmParams {
        let mut p = LstmParams::new("t", dx, dc, &Rng::new(0));
        for t in p.params_mut() {
            t.value.fill(0.0);
        }
        p
    }

    fn zero_aalstm(dx: usize, dc: usize) -> AalstmParams {
        let mut p = AalstmParams::new("t", dx, dc, &Rng::new(0));
        for t in p.params_mut() {
            t.value.fill(0.0);
        }
        p
    }

    fn state(h: f64, c: f64) -> RnnState {
        RnnState { h: Vector::from(vec![h]), c: Vector::from(vec![c]) }
    }

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    fn random_matrix(rows: usize, cols: usize, rng: &mut Rng, scale: f64) -> Matrix {
        Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.uniform(-scale, scale)).collect()).unwrap()
    }

    #[test]
    fn lstm_zero_weights() {
        let p = zero_lstm(1, 1);
        let s = lstm_step(&p, &[1.0], &state(0.0, 1.0)).unwrap();
        assert!((s.c[0] - 0.5).abs() < 1e-15);
        assert!((s.h[0] - 0.231_058_578_630_004_87).abs() < 1e-12);
    }

    #[test]
    fn lstm_candidate_only() {
        let mut p = zero_lstm(1, 1);
        p.w_c.value[(0, 0)] = 1.0;
        let s = lstm_step(&p, &[1.0], &state(0.0, 0.0)).unwrap();
        assert!((s.c[0] - 0.380_797_077_977_882_4).abs() < 1e-12);
        assert!((s.h[0] - 0.181_699_742_194_526_25).abs() < 1e-12);
    }

    #[test]
    fn aalstm_zero_weights_unit_aspect() {
        let p = zero_aalstm(1, 1);
        let s = aalstm_step(&p, &[1.0], &[1.0], &state(0.0, 1.0)).unwrap();
        let g = 0.622_459_331_201_854_6;
        assert!((s.c[0] - g).abs() < 1e-12);
        assert!((s.h[0] - 0.344_119_194_216_263_97).abs() < 1e-12);
        let s0 = aalstm_step(&p, &[1.0], &[0.0], &state(0.0, 1.0)).unwrap();
        assert!((s0.c[0] - 0.5).abs() < 1e-15);
        assert!((s0.h[0] - 0.231_058_578_630_004_87).abs() < 1e-12);
    }

    #[test]
    fn aalstm_rejects_mismatched_aspect_dims() {
        let p = AalstmParams::new("t", 2, 3, &Rng::new(1));
        assert!(aalstm_step(&p, &[0.0, 0.0], &[1.0, 1.0], &RnnState::zeros(3)).is_err());
        let mut bad = p.clone();
        bad.w_ai = ParamTensor::zeros("t.w_ai", crate::numcore::ParamKind::Weight, 2, 5);
        assert!(bad.validate().is_err());
        let AalstmParams { base, w_af, w_ao, b_ai, b_af, b_ao, .. } = p;
        let w_ai = ParamTensor::zeros("x", crate::numcore::ParamKind::Weight, 2, 5);
        assert!(AalstmParams::from_parts(base, w_ai, w_af, w_ao, b_ai, b_af, b_ao).is_err());
    }

    #[test]
    fn two_step_chain_matches_scalar_oracle() {
        let mut p = zero_aalstm(1, 1);
        p.base.w_c.value[(0, 0)] = 1.0;
        let xs = Matrix::new(2, 1, vec![1.0, 1.0]).unwrap();
        let out = run_sequence(&Cell::Aalstm(p), &xs, Some(&[1.0])).unwrap();
        assert!((out.h[(0, 0)] - 0.274_800_229_310_661_56).abs() < 1e-12);
        assert!((out.h[(1, 0)] - 0.402_377_752_837_408).abs() < 1e-12);
        assert!((out.final_state.c[0] - 0.769_145_324_086_287_8).abs() < 1e-12);
    }

    /// Independent scalar evaluation of the aspect-aware recurrence (dc = da = dx = 1).
    #[test]
    fn scalar_oracle_random_weights() {
        let mut rng = Rng::new(5);
        let p = AalstmParams::new("t", 1, 1, &rng);
        let w = |t: &ParamTensor| (t.vals()[0], t.vals().get(1).copied().unwrap_or(0.0));
        let (xs, a) = ([0.3, -1.2, 0.8], rng.uniform(-1.0, 1.0));
        let (mut h, mut c) = (0.0f64, 0.0f64);
        let mut expected = vec![];
        for &x in &xs {
            let ai = sig(w(&p.w_ai).0 * a + w(&p.w_ai).1 * h + p.b_ai.vals()[0]);
            let af = sig(w(&p.w_af).0 * a + w(&p.w_af).1 * h + p.b_af.vals()[0]);
            let ao = sig(w(&p.w_ao).0 * a + w(&p.w_ao).1 * h + p.b_ao.vals()[0]);
            let i = sig(w(&p.base.w_i).0 * x + w(&p.base.w_i).1 * h + ai * a);
            let f = sig(w(&p.base.w_f).0 * x + w(&p.base.w_f).1 * h + af * a);
            let g = (w(&p.base.w_c).0 * x + w(&p.base.w_c).1 * h).tanh();
            let o = sig(w(&p.base.w_o).0 * x + w(&p.base.w_o).1 * h + ao * a);
            c = f * c + i * g;
            h = o * c.tanh();
            expected.push(h);
        }
        let out = run_sequence(&Cell::Aalstm(p), &Matrix::new(3, 1, xs.to_vec()).unwrap(), Some(&[a])).unwrap();
        for (t, e) in expected.iter().enumerate() {
            assert!((out.h[(t, 0)] - e).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_aspect_reduces_to_lstm() {
        let mut rng = Rng::new(9);
        for trial in 0..20 {
            let (dx, dc) = (3, 4);
            let aa = AalstmParams::new(&format!("r{trial}"), dx, dc, &rng.substream(&trial.to_string()));
            let t_len = 1 + rng.below(8);
            let xs = random_matrix(t_len, dx, &mut rng, 2.0);
            let zero = vec![0.0; dc];
            let a = run_sequence(&Cell::Aalstm(aa.clone()), &xs, Some(&zero)).unwrap();
            let v = run_sequence(&Cell::Lstm(aa.base.clone()), &xs, None).unwrap();
            assert!(a.h.max_abs_diff(&v.h) <= 1e-15);
        }
    }

    #[test]
    fn gru_cases() {
        let mut p = GruParams::new("g", 2, 2, &Rng::new(0));
        for t in p.params_mut() {
            t.value.fill(0.0);
        }
        let h = gru_step(&p, &[1.0, -1.0], &[0.4, -0.8]).unwrap();
        assert!((h[0] - 0.2).abs() < 1e-15 && (h[1] + 0.4).abs() < 1e-15);
        let p2 = GruParams::new("g", 2, 2, &Rng::new(3));
        let mut p2z = p2.clone();
        p2z.w_h.value.fill(0.0);
        p2z.u_h.value.fill(0.0);
        let h = gru_step(&p2z, &[1.0, 2.0], &[0.0, 0.0]).unwrap();
        assert_eq!(h.as_slice(), &[0.0, 0.0]);
        let mut sat = p2.clone();
        sat.b_z.value.fill(-40.0);
        let h = gru_step(&sat, &[0.5, 0.5], &[0.3, -0.6]).unwrap();
        assert!((h[0] - 0.3).abs() < 1e-12 && (h[1] + 0.6).abs() < 1e-12);
    }

    #[test]
    fn single_step_sequence_and_pooling() {
        let p = LstmParams::new("p", 2, 2, &Rng::new(2));
        let xs = Matrix::new(1, 2, vec![0.5, -0.5]).unwrap();
        let out = run_sequence(&Cell::Lstm(p.clone()), &xs, None).unwrap();
        let s = lstm_step(&p, &[0.5, -0.5], &RnnState::zeros(2)).unwrap();
        assert_eq!(out.h.row(0), s.h.as_slice());
        assert_eq!(pool(&out.h, PoolMode::Last).unwrap(), pool(&out.h, PoolMode::Mean).unwrap());
        let m = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(pool(&m, PoolMode::Mean).unwrap().as_slice(), &[0.5, 0.5]);
        let m3 = Matrix::from_rows(&[[1.0], [2.0], [3.0]]).unwrap();
        assert_eq!(pool(&m3, PoolMode::Last).unwrap().as_slice(), &[3.0]);
        assert!(pool(&Matrix::zeros(0, 2), PoolMode::Mean).is_err());
        assert!(run_sequence(&Cell::Lstm(p), &Matrix::zeros(0, 2), None).is_err());
    }

    #[test]
    fn bidirectional_palindrome_symmetry() {
        let cell = Cell::Lstm(LstmParams::new("b", 2, 3, &Rng::new(4)));
        let xs = Matrix::from_rows(&[[0.1, 0.2], [0.7, -0.3], [0.1, 0.2]]).unwrap();
        let out = run_bidirectional(&cell, &cell, &xs, None).unwrap();
        assert_eq!(out.h.cols(), 6);
        for t in 0..3 {
            let (a, b) = (out.h.row(t), out.h.row(2 - t));
            assert!(crate::numcore::Vector::from(a[..3].to_vec()).max_abs_diff(&Vector::from(b[3..].to_vec())) < 1e-15);
        }
        let one = Matrix::from_rows(&[[0.4, -0.1]]).unwrap();
        let out = run_bidirectional(&cell, &cell, &one, None).unwrap();
        let s = lstm_step(cell.base(), &[0.4, -0.1], &RnnState::zeros(3)).unwrap();
        assert_eq!(&out.h.row(0)[..3], s.h.as_slice());
        assert_eq!(&out.h.row(0)[3..], s.h.as_slice());
    }

    #[test]
    fn bidirectional_zero_aspect_reduces() {
        let rng = Rng::new(8);
        let f = AalstmParams::new("f", 3, 3, &rng);
        let b = AalstmParams::new("b", 3, 3, &rng);
        let xs = random_matrix(5, 3, &mut Rng::new(1), 1.0);
        let z = [0.0; 3];
        let aa = run_bidirectional(&Cell::Aalstm(f.clone()), &Cell::Aalstm(b.clone()), &xs, Some(&z)).unwrap();
        let va = run_bidirectional(&Cell::Lstm(f.base), &Cell::Lstm(b.base), &xs, None).unwrap();
        assert!(aa.h.max_abs_diff(&va.h) <= 1e-15);
    }

    #[test]
    fn hidden_states_bounded_and_aspect_sensitive() {
        let rng = Rng::new(12);
        let p = AalstmParams::new("s", 3, 3, &rng);
        let xs = random_matrix(6, 3, &mut Rng::new(2), 5.0);
        let a1 = [0.5, -0.5, 0.2];
        let a2 = [0.5, -0.5, 0.3];
        let h1 = run_sequence(&Cell::Aalstm(p.clone()), &xs, Some(&a1)).unwrap();
        let h2 = run_sequence(&Cell::Aalstm(p), &xs, Some(&a2)).unwrap();
        assert!(h1.h.as_slice().iter().all(|v| v.abs() < 1.0));
        assert!(h1.h.max_abs_diff(&h2.h) > 0.0);
    }

    struct SeqProblem {
        enc: RecurrentEncoder,
        xs: Matrix,
        aspect: Option<Vec<f64>>,
        weights: Matrix,
    }

    impl SeqProblem {
        fn loss(&self) -> crate::Result<f64> {
            let a = self.aspect.as_deref();
            let (out, _) = self.enc.forward(&self.xs, a, a)?;
            Ok(out.h.as_slice().iter().zip(self.weights.as_slice()).map(|(h, w)| h * w).sum::<f64>()
                + out.h.as_slice().iter().map(|h| h * h).sum::<f64>())
        }

        fn backward(&mut self) -> crate::Result<f64> {
            for p in self.enc.params_mut() {
                p.zero_grad();
            }
            let a = self.aspect.clone();
            let (out, cache) = self.enc.forward(&self.xs, a.as_deref(), a.as_deref())?;
            let dh: Vec<f64> = out.h.as_slice().iter().zip(self.weights.as_slice()).map(|(h, w)| w + 2.0 * h).collect();
            let dh = Matrix::new(out.h.rows(), out.h.cols(), dh)?;
            self.enc.backward(&cache, &dh);
            self.loss()
        }
    }

    fn seq_problem(kind: CellKind, bi: bool, seed: u64) -> SeqProblem {
        let rng = Rng::new(seed);
        let mut enc = RecurrentEncoder::new(kind, bi, "enc", 2, 3, &rng);
        // Larger weights than the default init keep gradients well above FD noise.
        let mut r = rng.substream("boost");
        for p in enc.params_mut() {
            for v in p.value.as_mut_slice() {
                *v = r.uniform(-0.8, 0.8);
            }
        }
        let mut data = rng.substream("data");
        let xs = random_matrix(4, 2, &mut data, 1.5);
        let aspect = (kind == CellKind::AspectAware).then(|| (0..3).map(|_| data.uniform(-1.0, 1.0)).collect());
        let weights = random_matrix(4, enc.out_dim(), &mut data, 1.0);
        SeqProblem { enc, xs, aspect, weights }
    }

    #[test]
    fn encoder_param_gradients() {
        for kind in [CellKind::Vanilla, CellKind::AspectAware] {
            for bi in [false, true] {
                let mut prob = seq_problem(kind, bi, 21);
                let checks = check_params(
                    &mut prob,
                    |m| m.enc.params_mut(),
                    |m| m.backward(),
                    |m| m.loss(),
                    1e-5,
                )
                .unwrap();
                for c in checks {
                    assert!(c.max_rel_error < 1e-5, "{kind:?} bi={bi} {}: {}", c.name, c.max_rel_error);
                }
            }
        }
    }

    #[test]
    fn encoder_input_and_aspect_gradients() {
        let mut prob = seq_problem(CellKind::AspectAware, true, 33);
        let a = prob.aspect.clone().unwrap();
        let (out, cache) = prob.enc.forward(&prob.xs, Some(&a), Some(&a)).unwrap();
        let dh: Vec<f64> = out.h.as_slice().iter().zip(prob.weights.as_slice()).map(|(h, w)| w + 2.0 * h).collect();
        let g = prob.enc.backward(&cache, &Matrix::new(out.h.rows(), out.h.cols(), dh).unwrap());
        let xs0 = prob.xs.clone();
        let err = crate::numcore::finite_diff_check(
            |th| {
                prob.xs = Matrix::new(xs0.rows(), xs0.cols(), th.to_vec()).unwrap();
                prob.loss().unwrap()
            },
            &Vector::from(xs0.as_slice().to_vec()),
            &Vector::from(g.dxs.as_slice().to_vec()),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-5, "dX {err}");
        prob.xs = xs0;
        let mut da = g.d_aspect_fwd.unwrap();
        crate::numcore::add_into(&mut da, &g.d_aspect_bwd.unwrap());
        let err = crate::numcore::finite_diff_check(
            |th| {
                prob.aspect = Some(th.to_vec());
                prob.loss().unwrap()
            },
            &Vector::from(a),
            &Vector::from(da),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-5, "dA {err}");
    }

    #[test]
    fn gru_gradients() {
        struct G {
            p: GruParams,
            x: Vec<f64>,
            h: Vec<f64>,
            w: Vec<f64>,
        }
        let rng = Rng::new(4);
        let mut p = GruParams::new("gru", 3, 2, &rng);
        let mut r = rng.substream("boost");
        for t in p.params_mut() {
            for v in t.value.as_mut_slice() {
                *v = r.uniform(-0.8, 0.8);
            }
        }
        let mut g = G { p, x: vec![0.3, -0.7, 1.1], h: vec![0.2, -0.4], w: vec![1.3, -0.6] };
        let loss = |g: &G| -> crate::Result<f64> {
            // two chained steps to exercise dh_prev
            let h1 = gru_step(&g.p, &g.x, &g.h)?;
            let h2 = gru_step(&g.p, &g.x, &h1)?;
            Ok(h2.dot(&g.w))
        };
        let checks = check_params(
            &mut g,
            |g| g.p.params_mut(),
            |g| {
                for t in g.p.params_mut() {
                    t.zero_grad();
                }
                let (h1, c1) = gru_forward(&g.p, &g.x, &g.h)?;
                let (h2, c2) = gru_forward(&g.p, &g.x, &h1)?;
                let (_, dh1) = gru_backward(&mut g.p, &c2, &g.w);
                gru_backward(&mut g.p, &c1, &dh1);
                Ok(h2.dot(&g.w))
            },
            loss,
            1e-5,
        )
        .unwrap();
        for c in checks {
            assert!(c.max_rel_error < 1e-5, "{}: {}", c.name, c.max_rel_error);
        }
    }
}
