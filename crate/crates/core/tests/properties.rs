mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tse_core::backward::Limits;
use tse_core::cfg::build_cfg;
use tse_core::driver::{run_mpbse, MpbseConfig, PathVerdict, ReplayMap};
use tse_core::gfse::{run_gfse, run_tse, GfseConfig, Stage};
use tse_core::lang::{parse_program, Program, StmtId};

use common::{reachable_by_enumeration, run_concrete, symbolic_stmts, ProgramGen};

fn generated(seed: u64) -> Program {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    parse_program(&ProgramGen::generate(&mut rng, 12)).unwrap()
}

fn enumerated(p: &Program) -> bool {
    reachable_by_enumeration(p, p.labels["t"], &symbolic_stmts(p), 12, 10_000)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn forward_execution_agrees_with_enumeration(seed in 1_000u64..1_000_000) {
        let p = generated(seed);
        let cfg = build_cfg(&p);
        let target = p.labels["t"];
        let r = run_gfse(&p, &cfg, &GfseConfig::new(target), &ReplayMap::new());
        prop_assert!(r.complete || r.reachable);
        let mut witness = false;
        for t in &r.tests {
            let stmts = symbolic_stmts(&p);
            let by_loc: BTreeMap<String, i64> = t.inputs.iter().map(|(loc, _, v)| (loc.clone(), *v)).collect();
            let inputs: BTreeMap<_, _> = stmts.iter().filter_map(|s| by_loc.get(&p.location(*s)).map(|v| (*s, *v))).collect();
            let reached = run_concrete(&p, target, &mut |s| inputs.get(&s).copied().unwrap_or(0), 10_000).reached;
            prop_assert!(reached, "test inputs {:?} miss the target", t.inputs);
            witness = true;
        }
        prop_assert_eq!(r.reachable, witness || enumerated(&p));
    }

    #[test]
    fn fork_limit_bounds_explored_paths(seed in 1_000u64..1_000_000, fork in 1u32..6) {
        let p = generated(seed);
        let cfg = build_cfg(&p);
        let mut c = MpbseConfig::new(p.labels["t"], cfg.entry().unwrap());
        c.limits = Limits { edge: 3, fork, path: 512 };
        c.exhaustive = true;
        let r = run_mpbse(&p, &cfg, &c);
        prop_assert!(r.stats.paths_explored <= 1 + fork);
    }

    #[test]
    fn two_stage_witnesses_reach_the_target(seed in 1_000u64..1_000_000) {
        let p = generated(seed);
        let cfg = build_cfg(&p);
        let target = p.labels["t"];
        let mut m = MpbseConfig::new(target, cfg.entry().unwrap());
        m.limits = Limits { edge: 1, fork: 1, path: 512 };
        let r = run_tse(&p, &cfg, &m, &GfseConfig::new(target), true);
        let inputs: Option<BTreeMap<StmtId, i64>> = match r.stage {
            Some(Stage::Mpbse) => {
                let w = r.mpbse.paths.iter().find(|x| x.verdict == PathVerdict::Feasible).unwrap();
                Some(w.inputs.iter().map(|i| (i.stmt, i.value)).collect())
            }
            Some(Stage::Gfse) => {
                let t = &r.gfse.as_ref().unwrap().tests[0];
                let by_loc: BTreeMap<&str, i64> = t.inputs.iter().map(|(loc, _, v)| (loc.as_str(), *v)).collect();
                Some(symbolic_stmts(&p).into_iter().filter_map(|s| by_loc.get(p.location(s).as_str()).map(|v| (s, *v))).collect())
            }
            None => None,
        };
        if let Some(inputs) = inputs {
            let reached = run_concrete(&p, target, &mut |s| inputs.get(&s).copied().unwrap_or(0), 10_000).reached;
            prop_assert!(reached);
        }
    }
}
