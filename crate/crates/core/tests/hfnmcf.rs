use hfgse::hfg::{
    validate_architecture, Buffer, BufferKind, Capability, Operand, ProcessSpec, SystemArchitecture,
};
use hfgse::hfnmcf::{
    assemble_hfnmcf, extract_trajectories, Block, BoundaryRows, ExtractError, HfnmcfInstance,
};
use hfgse::io::fixtures::{electric_micro, lagged_transport, tracked_shipments};
use hfgse::net::{simulate, FiringSchedule};
use hfgse::provenance::Constraint;
use hfgse::qp::{solve_qp, SolverOptions, Status};
use hfgse::sparse::SparseMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A line of buffers with an injection at the head, transports with random
/// durations between neighbours and random withdrawals.
fn random_instance(rng: &mut ChaCha8Rng) -> (HfnmcfInstance, Vec<usize>) {
    let n_b = rng.gen_range(2..=4);
    let horizon = rng.gen_range(1..=4);
    let buffers: Vec<Buffer> = (0..n_b)
        .map(|b| Buffer {
            id: format!("b{b}"),
            name: format!("b{b}"),
            location: if b % 2 == 0 { "east" } else { "west" }.into(),
            kind: BufferKind::Terminal,
        })
        .collect();
    let mut caps = vec![
        Capability::at("source", ProcessSpec::injection("supply", "x"), "b0")
            .with_capacity(rng.gen_range(1.0..5.0)),
    ];
    for b in 1..n_b {
        caps.push(
            Capability::between(
                &format!("link{b}"),
                ProcessSpec::transport("transport", "x"),
                &format!("b{}", b - 1),
                &format!("b{b}"),
            )
            .with_duration(rng.gen_range(0..=2)),
        );
    }
    let mut draws = Vec::new();
    for b in 0..n_b {
        if b == 0 || rng.gen_bool(0.6) {
            draws.push(caps.len());
            caps.push(Capability::at(
                &format!("draw{b}"),
                ProcessSpec::withdrawal("use", "x"),
                &format!("b{b}"),
            ));
        }
    }
    let arch = SystemArchitecture {
        operands: vec![Operand {
            id: "x".into(),
            name: "x".into(),
            unit: "GJ".into(),
        }],
        buffers,
        capabilities: caps,
    };
    assert!(validate_architecture(&arch).is_empty());
    let mut inst = HfnmcfInstance::from_architecture(&arch, 1.0, horizon).unwrap();
    // stock in every buffer keeps any small draw feasible
    inst.esn.net.initial_places = vec![10.0; n_b];
    let t = arch.n_capabilities();
    let d = SparseMatrix::from_triplets(
        draws.len(),
        t,
        draws.iter().enumerate().map(|(r, &c)| (r, c, 1.0)),
    )
    .unwrap();
    let values = (0..horizon)
        .map(|_| draws.iter().map(|_| rng.gen_range(0.0..1.0)).collect())
        .collect();
    inst.boundary.u_minus = Some(BoundaryRows {
        matrix: d,
        values,
        labels: draws
            .iter()
            .map(|&c| arch.capabilities[c].id.clone())
            .collect(),
    });
    inst.set_block_cost(Block::UMinus, 1.0, 0.1);
    inst.set_block_cost(Block::UPlus, 1.0, 0.0);
    inst.set_block_cost(Block::QB, 0.01, 0.0);
    (inst, draws)
}

/// Row and column counts written out from the layout definition.
struct Expected {
    vars: usize,
    eq: usize,
    ineq: usize,
}

fn expected_counts(inst: &HfnmcfInstance) -> Expected {
    let k = inst.horizon;
    let p = inst.esn.net.n_places();
    let t = inst.esn.net.n_transitions();
    let pl: usize = inst.operand_nets.iter().map(|n| n.net.n_places()).sum();
    let tl: usize = inst
        .operand_nets
        .iter()
        .map(|n| n.net.n_transitions())
        .sum();
    let durations = |d: &[usize]| d.iter().map(|&d| k.saturating_sub(d)).sum::<usize>();
    let op_durations: usize = inst
        .operand_nets
        .iter()
        .map(|n| durations(&n.net.durations))
        .sum();
    let sync = inst
        .sync
        .as_ref()
        .map_or(0, |s| 2 * k * s.lambda_plus.n_rows());
    let bd = &inst.boundary;
    let boundary: usize = [&bd.u_plus, &bd.u_minus, &bd.ul_plus, &bd.ul_minus]
        .iter()
        .map(|b| b.as_ref().map_or(0, |b| k * b.matrix.n_rows()))
        .sum();
    let f = &inst.final_conditions;
    let finals = f.q_b.as_ref().map_or(0, |v| v.len())
        + f.q_e.as_ref().map_or(0, |v| v.len())
        + f.q_sl.as_ref().map_or(0, |v| v.len())
        + t
        + tl;
    let caps = inst.capacities.iter().filter(|c| c.is_some()).count();
    Expected {
        vars: (k + 1) * (p + t + pl + tl + 2 * t + 2 * tl),
        eq: k * (p + t)
            + durations(&inst.esn.net.durations)
            + k * (pl + tl)
            + op_durations
            + sync
            + boundary
            + (p + t + pl)
            + finals,
        ineq: 2 * (k + 1) * (t + tl) + k * caps,
    }
}

#[test]
fn row_and_column_counts_match_the_layout() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut instances: Vec<HfnmcfInstance> = (0..40).map(|_| random_instance(&mut rng).0).collect();
    instances.extend([electric_micro(), lagged_transport(), tracked_shipments()]);
    for inst in &instances {
        let a = assemble_hfnmcf(inst).unwrap();
        let e = expected_counts(inst);
        let qp = &a.program.qp;
        assert_eq!(qp.n_vars(), e.vars);
        assert_eq!(a.layout.total(), e.vars);
        assert_eq!(qp.b_eq.len(), e.eq);
        assert_eq!(qp.e_ineq.len(), e.ineq);
        assert_eq!(a.program.eq_tags.len(), e.eq);
        assert_eq!(a.program.ineq_tags.len(), e.ineq);
    }
}

#[test]
fn block_columns_tile_the_decision_vector() {
    let (inst, _) = random_instance(&mut ChaCha8Rng::seed_from_u64(9));
    let inst = {
        let t = tracked_shipments();
        assert!(!t.operand_nets.is_empty());
        [inst, t]
    };
    for inst in &inst {
        let l = inst.layout();
        let mut seen = vec![false; l.total()];
        for k in 1..=l.n_steps() {
            for block in Block::ALL {
                for i in 0..l.block_len(block) {
                    let c = l.col(block, k, i);
                    assert!(!seen[c], "column {c} used twice");
                    seen[c] = true;
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
    }
}

#[test]
fn optimal_firings_replay_through_the_petri_dynamics() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for case in 0..25 {
        let (inst, draws) = random_instance(&mut rng);
        let a = assemble_hfnmcf(&inst).unwrap();
        let sol = solve_qp(&a.program.qp, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, Status::Optimal, "case {case}");
        let t = extract_trajectories(&inst, &sol).unwrap();
        assert!(
            t.replay_residual <= 1e-7,
            "case {case}: {}",
            t.replay_residual
        );

        // an independent replay from the raw firings
        let schedule = FiringSchedule::new(
            t.esn
                .u_minus
                .iter()
                .map(|u| u.iter().map(|v| v.max(0.0)).collect())
                .collect(),
            t.esn
                .u_plus
                .iter()
                .map(|u| u.iter().map(|v| v.max(0.0)).collect())
                .collect(),
        )
        .unwrap();
        let replay = simulate(&inst.esn, &schedule).unwrap();
        assert!(replay
            .violations
            .iter()
            .all(|v| !matches!(v, hfgse::net::NetViolation::NegativePlace { value, .. } if *value < -1e-7)));
        for (a, b) in replay
            .places
            .iter()
            .flatten()
            .zip(t.esn.places.iter().flatten())
        {
            assert!((a - b).abs() <= 1e-7);
        }
        // boundary data is met
        let bd = inst.boundary.u_minus.as_ref().unwrap();
        for (k, values) in bd.values.iter().enumerate() {
            for (r, &c) in draws.iter().enumerate() {
                assert!((t.esn.u_minus[k][c] - values[r]).abs() <= 1e-7);
            }
        }
    }
}

#[test]
fn every_row_carries_a_tag() {
    let a = assemble_hfnmcf(&tracked_shipments()).unwrap();
    for tag in a.program.eq_tags.iter().chain(&a.program.ineq_tags) {
        assert!(!tag.entity.is_empty());
    }
    assert_eq!(a.program.eq_rows_of(Constraint::SyncPlus).len(), 2);
    assert_eq!(a.program.eq_rows_of(Constraint::SyncMinus).len(), 2);
    let mut csv = Vec::new();
    a.program.write_provenance_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(
        text.lines().count(),
        1 + a.program.eq_tags.len() + a.program.ineq_tags.len()
    );
    assert!(text.contains("sync_plus"));
}

#[test]
fn extraction_needs_an_optimal_solution() {
    let inst = lagged_transport();
    let a = assemble_hfnmcf(&inst).unwrap();
    let mut sol = solve_qp(&a.program.qp, &SolverOptions::default()).unwrap();
    sol.status = Status::MaxIterations;
    assert!(matches!(
        extract_trajectories(&inst, &sol),
        Err(ExtractError::NotOptimal(Status::MaxIterations))
    ));
}

#[test]
fn demand_beyond_capacity_is_infeasible() {
    let mut inst = electric_micro();
    inst.capacities[0] = Some(0.5);
    inst.capacities[1] = Some(0.5);
    let a = assemble_hfnmcf(&inst).unwrap();
    let sol = solve_qp(&a.program.qp, &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, Status::Infeasible);
}
