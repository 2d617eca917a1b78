use super::*;
use crate::dsl::parse_tokens;

fn question() -> Vec<&'static str> {
    vec![
        "which", "<T1>", "<P1>", "through", "<E1>", "but", "not", "<E2>", "or", "<E1>",
    ]
}

fn program() -> Vec<&'static str> {
    vec![
        "Select", "<E1>", "<P1>", "<T1>", "Diff", "<E2>", "<P1>", "<T1>", "EOQ",
    ]
}

fn small_policy(seed: u64) -> Policy {
    let cfg = PolicyConfig {
        d_e: 8,
        d_q: 8,
        init_scale: 0.3,
        embed_scale: 0.5,
        seed,
    };
    Policy::new(cfg, question())
}

#[test]
fn distribution_sums_to_one() {
    let p = small_policy(1);
    let enc = p.encode(&question()).unwrap();
    let ids: Vec<usize> = program()
        .iter()
        .map(|t| enc.candidate(t).unwrap())
        .collect();
    let mut state = p.initial_state(&enc);
    for &c in &ids {
        let (dist, cache) = p.decode_step(&enc, &state);
        assert_eq!(dist.len(), enc.candidates().len());
        let total: f64 = dist.iter().sum();
        assert!((total - 1.0).abs() < 1e-12, "{total}");
        assert!(dist.iter().all(|&x| x >= 0.0));
        state = p.advance(&cache, c, state.t);
    }
}

#[test]
fn equal_scores_give_uniform_slots() {
    let mut p = small_policy(2);
    p.params.out_vecs.fill(0.0);
    p.params.w_c.fill(0.0);
    let toks = ["a", "b", "c"];
    let enc = p.encode(&toks).unwrap();
    let (dist, _) = p.decode_step(&enc, &p.initial_state(&enc));
    let n_slots = (n_out() + toks.len()) as f64;
    for x in dist {
        assert!((x - 1.0 / n_slots).abs() < 1e-12);
    }
}

#[test]
fn repeated_tokens_pool_their_copy_mass() {
    let p = small_policy(3);
    let enc = p.encode(&question()).unwrap();
    let cache = p.step(&enc, &p.initial_state(&enc));
    let dist = p.token_distribution(&enc, &cache);
    let e1 = enc.candidate("<E1>").unwrap();
    let slots = cache.slot_probs();
    let expected = slots[n_out() + 4] + slots[n_out() + 9];
    assert!((dist[e1] - expected).abs() < 1e-15);
    assert!(enc.candidate("<E9>").is_none());
}

#[test]
fn operator_in_question_gets_both_modes() {
    let p = small_policy(3);
    let toks = ["Count", "the", "<T1>"];
    let enc = p.encode(&toks).unwrap();
    let cache = p.step(&enc, &p.initial_state(&enc));
    let dist = p.token_distribution(&enc, &cache);
    let count = enc.candidate("Count").unwrap();
    assert!(count < n_out());
    let slots = cache.slot_probs();
    assert!((dist[count] - (slots[count] + slots[n_out()])).abs() < 1e-15);
    assert_eq!(enc.candidates().len(), n_out() + 2);
}

#[test]
fn selective_read_follows_previous_copy() {
    let p = small_policy(4);
    let enc = p.encode(&question()).unwrap();
    let s0 = p.initial_state(&enc);
    let c0 = p.step(&enc, &s0);
    assert_eq!(c0.read_weights(enc.len()).sum(), 0.0);

    let e1 = enc.candidate("<E1>").unwrap();
    let s1 = p.advance(&c0, e1, s0.t);
    let c1 = p.step(&enc, &s1);
    let w = c1.read_weights(enc.len());
    assert!((w.sum() - 1.0).abs() < 1e-12);
    for (j, &x) in w.iter().enumerate() {
        if j == 4 || j == 9 {
            assert!(x > 0.0);
        } else {
            assert_eq!(x, 0.0);
        }
    }
    let (a, b) = (c0.copy_scores[4].exp(), c0.copy_scores[9].exp());
    assert!((w[4] - a / (a + b)).abs() < 1e-12);

    let select = enc.candidate("Select").unwrap();
    let s2 = p.advance(&c1, select, s1.t);
    let c2 = p.step(&enc, &s2);
    assert_eq!(c2.read_weights(enc.len()).sum(), 0.0);
}

#[test]
fn empty_question_is_rejected() {
    let p = small_policy(0);
    let empty: [&str; 0] = [];
    assert!(matches!(p.encode(&empty), Err(PolicyError::EmptyQuestion)));
}

#[test]
fn unknown_words_share_one_embedding() {
    let p = small_policy(0);
    assert_eq!(p.input_embedding("zzz"), p.input_embedding("qqq"));
    assert_ne!(p.input_embedding("which"), p.input_embedding("zzz"));
}

#[test]
fn decoding_is_deterministic() {
    let a = small_policy(5);
    let b = small_policy(5);
    let ea = a.encode(&question()).unwrap();
    let eb = b.encode(&question()).unwrap();
    assert_eq!(a.greedy_decode(&ea, 20), b.greedy_decode(&eb, 20));
    assert_eq!(a.beam_search(&ea, 4, 4, 20), b.beam_search(&eb, 4, 4, 20));
}

#[test]
fn width_one_beam_is_greedy() {
    for seed in 0..5 {
        let p = small_policy(seed);
        let enc = p.encode(&question()).unwrap();
        let g = p.greedy_decode(&enc, 12);
        let b = p.beam_search(&enc, 1, 1, 12);
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].tokens, g.tokens);
        assert!((b[0].log_prob - g.log_prob).abs() < 1e-12);
    }
}

#[test]
fn beam_results_are_sorted_and_distinct() {
    let p = small_policy(6);
    let enc = p.encode(&question()).unwrap();
    let beams = p.beam_search(&enc, 5, 5, 8);
    assert_eq!(beams.len(), 5);
    for w in beams.windows(2) {
        assert!(w[0].log_prob >= w[1].log_prob);
        assert_ne!(w[0].tokens, w[1].tokens);
    }
    for b in &beams {
        let lp = p.log_prob(&enc, &b.tokens).unwrap();
        assert!((lp - b.log_prob).abs() < 1e-9);
    }
}

#[test]
fn truncated_output_is_not_a_program() {
    let mut p = small_policy(7);
    // all generate scores tie at zero; EOQ is never the first maximum
    p.params.w_o.fill(0.0);
    assert_ne!(p.eoq(), 0);
    let enc = p.encode(&question()).unwrap();
    let t = p.greedy_decode(&enc, 2);
    assert_eq!(t.tokens.len(), 2);
    assert_ne!(t.tokens.last().map(String::as_str), Some("EOQ"));
    assert!(parse_tokens(&t.tokens).is_err());
}

#[test]
fn log_prob_is_product_of_step_probs() {
    let p = small_policy(8);
    let enc = p.encode(&question()).unwrap();
    let ids: Vec<usize> = program()
        .iter()
        .map(|t| enc.candidate(t).unwrap())
        .collect();
    let mut state = p.initial_state(&enc);
    let mut prod = 1.0;
    for &c in &ids {
        let (dist, cache) = p.decode_step(&enc, &state);
        prod *= dist[c];
        state = p.advance(&cache, c, state.t);
    }
    let lp = p.log_prob(&enc, &program()).unwrap();
    assert!((lp.exp() - prod).abs() < 1e-12);
}

#[test]
fn tokens_outside_the_question_are_infeasible() {
    let p = small_policy(8);
    let enc = p.encode(&question()).unwrap();
    let err = p.log_prob(&enc, &["Select", "<E7>", "EOQ"]).unwrap_err();
    assert!(matches!(err, PolicyError::InfeasibleToken(t) if t == "<E7>"));
}

fn objective(p: &Policy, seqs: &[(Vec<&str>, f64)]) -> f64 {
    let enc = p.encode(&question()).unwrap();
    seqs.iter()
        .map(|(s, w)| w * p.log_prob(&enc, s).unwrap())
        .sum()
}

#[test]
fn gradients_match_central_differences() {
    let p = small_policy(9);
    let seqs = vec![
        (program(), 0.7),
        (
            vec![
                "Select", "<E1>", "<P1>", "<T1>", "Union", "<E1>", "<P1>", "<T1>", "EOQ",
            ],
            -0.4,
        ),
        (vec!["<E1>", "<E1>", "Count", "EOQ"], 1.3),
    ];
    let enc = p.encode(&question()).unwrap();
    let mut grad = p.params.zeros_like();
    for (s, w) in &seqs {
        p.accumulate_gradients(&enc, s, *w, &mut grad).unwrap();
    }

    let eps = 1e-5;
    let names: Vec<&str> = grad.tensors().iter().map(|(n, _)| *n).collect();
    for (ti, name) in names.iter().enumerate() {
        let analytic = grad.tensors()[ti].1.to_vec();
        let mut fd = vec![0.0; analytic.len()];
        for (k, slot) in fd.iter_mut().enumerate() {
            let mut plus = p.clone();
            plus.params.tensors_mut()[ti].1[k] += eps;
            let mut minus = p.clone();
            minus.params.tensors_mut()[ti].1[k] -= eps;
            *slot = (objective(&plus, &seqs) - objective(&minus, &seqs)) / (2.0 * eps);
        }
        let diff: f64 = analytic
            .iter()
            .zip(&fd)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt()
            + fd.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(scale > 0.0, "{name} has zero gradient");
        let rel = diff / scale;
        assert!(rel < 1e-4, "{name}: relative error {rel:e}");
    }
}

#[test]
fn gradient_step_increases_log_prob() {
    let mut p = small_policy(10);
    let enc = p.encode(&question()).unwrap();
    let before = p.log_prob(&enc, &program()).unwrap();
    let g = p.gradients(&enc, &program(), 1.0).unwrap();
    p.params.add_scaled(&g, 1e-3);
    let enc = p.encode(&question()).unwrap();
    let after = p.log_prob(&enc, &program()).unwrap();
    assert!(after > before, "{before} -> {after}");
}

#[test]
fn zero_weight_gives_zero_gradient() {
    let p = small_policy(11);
    let enc = p.encode(&question()).unwrap();
    let g = p.gradients(&enc, &program(), 0.0).unwrap();
    assert_eq!(g.norm(), 0.0);
}

#[test]
fn checkpoint_round_trip() {
    let p = small_policy(12);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.json");
    p.save(&path).unwrap();
    let q = Policy::load(&path).unwrap();
    assert_eq!(q.params, p.params);
    assert_eq!(q.config(), p.config());
    let (ea, eb) = (
        p.encode(&question()).unwrap(),
        q.encode(&question()).unwrap(),
    );
    assert_eq!(p.greedy_decode(&ea, 10), q.greedy_decode(&eb, 10));
    assert!(Policy::load(&dir.path().join("missing.json")).is_err());
}
