use super::*;
use crate::linear::ActionSet;

struct Scripted {
    plays: Vec<usize>,
    t: usize,
}

impl BanditAgent for Scripted {
    fn name(&self) -> &str {
        "scripted"
    }

    fn select(&mut self, _actions: &ActionSet) -> Result<usize> {
        self.t += 1;
        Ok(self.plays[self.t - 1])
    }

    fn observe(&mut self, _action: &DVector<f64>, _reward: f64) -> Result<()> {
        Ok(())
    }
}

fn small_linear(agents: &[AgentKind], diagnostics: bool) -> ExperimentConfig {
    ExperimentConfig {
        setting: Setting::Linear,
        n: 40,
        replications: 6,
        seed: 11,
        output: None,
        workers: 1,
        diagnostics,
        diagnostics_options: None,
        environment: EnvironmentConfig::Synthetic {
            dim: 5,
            num_latent: 3,
            sigma0: 0.05,
            noise_sd: 0.1,
            cov_scaling: CovScaling::Linear,
        },
        agents: agents.iter().map(|&k| AgentConfig::of(k)).collect(),
        sweep: Some(SweepConfig {
            axis: SweepAxis::Sigma0,
            values: vec![0.01, 0.2],
        }),
    }
}

fn small_mdp(agents: &[AgentKind], diagnostics: bool) -> ExperimentConfig {
    ExperimentConfig {
        setting: Setting::Mdp,
        n: 15,
        replications: 4,
        seed: 3,
        output: None,
        workers: 1,
        diagnostics,
        diagnostics_options: None,
        environment: EnvironmentConfig::RiverSwim {
            num_states: 5,
            horizon: 8,
            concentration: 5.0,
        },
        agents: agents.iter().map(|&k| AgentConfig::of(k)).collect(),
        sweep: None,
    }
}

#[test]
fn scripted_trace_matches_hand_computation() {
    let env = LinearEnv::Gaussian {
        latent: 0,
        theta: DVector::from_vec(vec![0.9, 0.5, 0.1]),
        actions: ActionSet::indicators(3),
        noise_sd: 0.1,
    };
    let mut agent = Scripted { plays: vec![0, 1, 2], t: 0 };
    let mut noise = RngStream::new(1, 0);
    let steps = run_linear_replication(&env, Some(&mut agent), 3, &mut noise, None, true).unwrap();
    let regrets: Vec<f64> = steps.iter().map(|s| s.regret).collect();
    assert!((regrets[0]).abs() < 1e-15);
    assert!((regrets[1] - 0.4).abs() < 1e-15);
    assert!((regrets[2] - 0.8).abs() < 1e-15);
    let mut recs = Vec::new();
    push_records(&mut recs, steps, 0.0, 0, "scripted");
    assert!((recs[2].cum_regret - 1.2).abs() < 1e-15);
}

#[test]
fn oracle_has_zero_regret() {
    for cfg in [small_linear(&[AgentKind::Oracle], false), small_mdp(&[AgentKind::Oracle], false)] {
        let recs = run_experiment(&cfg).unwrap();
        assert!(recs.iter().all(|r| r.inst_regret == 0.0 && r.cum_regret == 0.0));
    }
}

#[test]
fn regret_nonnegative_and_cumulative() {
    let all = [AgentKind::Mixts, AgentKind::Ts, AgentKind::Units, AgentKind::Exp4, AgentKind::CorralExp4];
    let recs = run_experiment(&small_linear(&all, true)).unwrap();
    let mdp = run_experiment(&small_mdp(&[AgentKind::Mixts, AgentKind::Psrl], true)).unwrap();
    for chunk in [recs, mdp] {
        let mut cum = 0.0;
        for r in &chunk {
            assert!(r.inst_regret >= -1e-12);
            if r.t == 1 {
                cum = 0.0;
            }
            cum += r.inst_regret;
            assert_eq!(cum, r.cum_regret);
        }
    }
}

#[test]
fn record_order_is_sweep_rep_agent_t() {
    let cfg = small_linear(&[AgentKind::Mixts, AgentKind::Oracle], false);
    let recs = run_experiment(&cfg).unwrap();
    assert_eq!(recs.len(), 2 * 6 * 2 * 40);
    let key = |r: &RegretRecord| {
        let agent = cfg.agents.iter().position(|a| a.name() == &*r.agent).unwrap();
        (if r.sweep == 0.01 { 0 } else { 1 }, r.rep, agent, r.t)
    };
    assert!(recs.windows(2).all(|w| key(&w[0]) < key(&w[1])));
}

#[test]
fn worker_count_does_not_change_results() {
    let base = small_linear(&[AgentKind::Mixts, AgentKind::Exp4], true);
    let seq = run_experiment(&base).unwrap();
    // reference: replications one by one on this thread
    let mut reference = Vec::new();
    for (s, &v) in base.sweep_values().iter().enumerate() {
        let point = SweepPoint::prepare(&base, s, &base.environment_at(v)).unwrap();
        for r in 0..base.replications {
            reference.extend(run_replication(&base, &point, s, v, r).unwrap());
        }
    }
    assert_eq!(seq, reference);
    for workers in [2, 4] {
        let par = run_experiment(&ExperimentConfig { workers, ..base.clone() }).unwrap();
        assert_eq!(par, seq);
    }
}

#[test]
fn agents_share_the_instance() {
    let cfg = small_linear(&[AgentKind::Mixts, AgentKind::Units], true);
    let recs = run_experiment(&cfg).unwrap();
    // every diagnostics row has one G column per latent state
    assert!(recs.iter().all(|r| r.diagnostics.as_ref().is_some_and(|d| d.g.len() == 3 && d.in_c.is_some())
        || &*r.agent == "units"));
}

#[test]
fn csv_layout() {
    let cfg = small_linear(&[AgentKind::Mixts, AgentKind::Oracle], true);
    let recs = run_experiment(&cfg).unwrap();
    let mut buf = Vec::new();
    write_csv(&recs, Some(3), &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(!text.contains('\r'));
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "sweep,rep,agent,t,inst_regret,cum_regret,G_0,G_1,G_2,in_C");
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first.len(), 10);
    assert_eq!(first[0], "1.0000000000000000e-2");
    assert_eq!(first[2], "mixts");
    assert!(first[9] == "0" || first[9] == "1");
    let oracle = text.lines().find(|l| l.contains(",oracle,")).unwrap();
    assert!(oracle.ends_with(",,,,"));
    let mut plain = Vec::new();
    write_csv(&recs[..1], None, &mut plain).unwrap();
    assert!(String::from_utf8(plain).unwrap().starts_with("sweep,rep,agent,t,inst_regret,cum_regret\n"));
    assert_eq!(format_decimal(0.1), "1.0000000000000001e-1");
}

fn rec(rep: usize, cum: f64) -> RegretRecord {
    RegretRecord {
        sweep: 0.0,
        rep,
        agent: Arc::from("a"),
        t: 1,
        inst_regret: cum,
        cum_regret: cum,
        diagnostics: None,
    }
}

#[test]
fn aggregate_examples() {
    let one = aggregate(&[rec(0, 2.5)]);
    assert_eq!(one.len(), 1);
    assert_eq!((one[0].mean, one[0].stderr), (2.5, 0.0));
    assert!(one[0].single_replication());
    let two = aggregate(&[rec(0, 1.0), rec(1, 3.0)]);
    assert_eq!((two[0].mean, two[0].stderr, two[0].reps), (2.0, 1.0, 2));
}

#[test]
fn aggregate_reference_values() {
    // reference from tests/oracles/high_precision.py
    let recs: Vec<_> = (0..200).map(|i| rec(i, ((37 * i) % 101) as f64 / 7.0)).collect();
    let row = &aggregate(&recs)[0];
    assert!((row.mean - 7.149_285_714_285_714).abs() < 1e-12);
    assert!((row.stderr - 0.296_091_687_932_646_66).abs() < 1e-12);
    let mut buf = Vec::new();
    write_aggregate_csv(&aggregate(&recs), &mut buf).unwrap();
    assert!(String::from_utf8(buf).unwrap().starts_with("sweep,agent,t,mean_cum_regret,stderr,reps\n"));
}

#[test]
fn mdp_diagnostics_and_latent_mass() {
    let cfg = small_mdp(&[AgentKind::Mixts], true);
    let point = SweepPoint::prepare(&cfg, 0, &cfg.environment).unwrap();
    let SweepPoint::Mdp(rs) = &point else { panic!() };
    let mut rng = RngStream::new(4, 0);
    let (latent, mdp) = rs.prior.sample(&mut rng).unwrap();
    let mut agent = MixTsMdpAgent::new("mixts", rs.prior.clone(), RngStream::new(4, 1));
    let steps = run_mdp_replication(&mdp, latent, Some(&mut agent), 30, &mut rng, Some(DiagnosticOptions { eta: None })).unwrap();
    assert!(steps.iter().all(|s| s.latent_mass.is_some() && s.diagnostics.as_ref().is_some_and(|d| d.g.len() == 2)));
    assert!(steps.last().unwrap().latent_mass.unwrap() > 0.5);
}

#[test]
fn feature_environment_runs() {
    use super::config::SyntheticTable;
    let cfg = ExperimentConfig {
        setting: Setting::Linear,
        n: 20,
        replications: 2,
        seed: 5,
        output: None,
        workers: 0,
        diagnostics: true,
        diagnostics_options: None,
        environment: EnvironmentConfig::Features {
            path: None,
            synthetic: Some(SyntheticTable { dim: 4, num_classes: 4, per_class: 20, spread: 0.1 }),
            reward_hi: 0.9,
            reward_lo: 0.1,
            k_actions: 5,
            num_latent: 4,
            prior: None,
            unimodal_prior: None,
            fit: PriorFitConfig { datasets: 60, dataset_size: 100, ..PriorFitConfig::default() },
        },
        agents: [AgentKind::Mixts, AgentKind::Ts, AgentKind::Units, AgentKind::Exp4, AgentKind::CorralExp4, AgentKind::Oracle]
            .iter()
            .map(|&k| AgentConfig::of(k))
            .collect(),
        sweep: None,
    };
    let recs = run_experiment(&cfg).unwrap();
    assert_eq!(recs.len(), 2 * 6 * 20);
    assert!(recs.iter().all(|r| r.inst_regret == 0.0 || (r.inst_regret - 0.8).abs() < 1e-15));
    // class labels do not index fitted components
    assert!(recs.iter().filter_map(|r| r.diagnostics.as_ref()).all(|d| d.in_c.is_none()));
}

#[test]
fn bound_rows_follow_sweep() {
    let cfg = small_linear(&[AgentKind::Mixts], false);
    let rows = bound_rows(&cfg, false).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].0, 0.01);
    let expect = crate::bounds::theorem1_bound(
        &BoundInputsLinear { n: 40, d: 5, num_latent: 3, sigma: 0.1, kappa: 1.0, lambda: 0.2 },
        false,
    )
    .unwrap();
    assert_eq!(rows[1].1, expect);
    assert!(rows[1].1 > rows[0].1);
    let mdp = bound_rows(&small_mdp(&[AgentKind::Psrl], false), false).unwrap();
    assert_eq!(mdp.len(), 1);
    assert!(mdp[0].1.is_finite() && mdp[0].1 > 0.0);
}
