use meshcs::basis::build_for_cloud;
use meshcs::bundle::{compress_field, SampleBundle};
use meshcs::fields::eval_field_g;
use meshcs::generate::{gen_holed_mesh, gen_uniform, HoledSquare};
use meshcs::mesh::{partition_indices, PointCloud};
use meshcs::pipeline::{
    clod_levels, error_norm, reconstruct_at_level, reconstruct_clod, reconstruct_full,
    reconstruct_levels, reconstruct_partitioned, DetailLevel, IdentitySampler, Reconstructor,
};
use meshcs::sampler::{BernoulliSpec, SignMatrix};
use meshcs::stomp::{StompConfig, StopReason};
use meshcs::Error;

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn small_mesh() -> (PointCloud, Vec<f64>) {
    let cloud = gen_holed_mesh(1500, &HoledSquare::default()).unwrap();
    let g = eval_field_g(&cloud).unwrap();
    (cloud, g)
}

#[test]
fn full_sampling_recovers_sparse_fields_exactly() {
    let cloud = gen_uniform(600, 2, 1).unwrap();
    let (_, basis) = build_for_cloud(&cloud, 3).unwrap();
    let top = basis.num_levels();
    let mut s = vec![0.0; cloud.len()];
    for (k, slot) in [3usize, 40, 77, 150, 301, 599].iter().enumerate() {
        s[*slot] = 1.0 + k as f64;
    }
    let f = basis.apply(&s, top).unwrap();

    let rec = Reconstructor::with_sampler(Box::new(IdentitySampler(f.len())), f.clone(), &cloud, 3)
        .unwrap();
    let sol = rec.solve_level(top, &StompConfig::default()).unwrap();
    assert!(sol.stomp.converged);
    assert!(error_norm(&f, &sol.field).unwrap().value < 1e-8);
}

#[test]
fn full_sampling_recovers_polynomials() {
    let cloud = gen_uniform(400, 3, 2).unwrap();
    let f: Vec<f64> = cloud
        .points()
        .map(|p| 1.0 + p[0] * p[1] - 3.0 * p[2])
        .collect();
    let rec = Reconstructor::with_sampler(Box::new(IdentitySampler(f.len())), f.clone(), &cloud, 3)
        .unwrap();
    let sol = rec
        .solve_level(rec.num_levels(), &StompConfig::default())
        .unwrap();
    assert!(error_norm(&f, &sol.field).unwrap().value < 1e-8);
}

#[test]
fn full_level_is_reconstruct_full() {
    let (cloud, g) = small_mesh();
    let bundle = compress_field("g", &g, 0, 5, 300).unwrap();
    let cfg = StompConfig::default();
    let full = reconstruct_full(&bundle, &cloud, 4, &cfg).unwrap();
    let rec = Reconstructor::new(&bundle, &cloud, 4).unwrap();
    let top = rec.num_levels();
    let at = reconstruct_at_level(&bundle, &cloud, 4, DetailLevel::At(top), None, &cfg).unwrap();
    assert_eq!(full.level, top);
    assert_eq!(bits(&full.field), bits(&at.field));
    assert!(matches!(
        reconstruct_at_level(&bundle, &cloud, 4, DetailLevel::At(top + 1), None, &cfg),
        Err(Error::LevelOutOfRange { .. })
    ));
}

#[test]
fn level_solutions_have_expected_shape() {
    let (cloud, g) = small_mesh();
    let bundle = compress_field("g", &g, 0, 5, 300).unwrap();
    let rec = Reconstructor::new(&bundle, &cloud, 3).unwrap();
    let report =
        reconstruct_levels(&rec, &[1, 2], false, &StompConfig::default(), Some(&g)).unwrap();
    assert_eq!(report.field.len(), cloud.len());
    assert_eq!(report.levels.len(), 2);
    assert!(report.levels.iter().all(|r| r.error.is_some()));
    let csv = report.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("level,error,seconds,stages"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "1");
    // 17 significant digits: one before the point, sixteen after
    let mantissa = row[1].split('e').next().unwrap();
    assert_eq!(mantissa.len(), 18);
    assert_eq!(
        row[1].parse::<f64>().unwrap(),
        report.levels[0].error.unwrap()
    );
}

#[test]
fn clod_on_single_level_cloud_is_one_solve() {
    let cloud = gen_uniform(10, 2, 3).unwrap();
    let f: Vec<f64> = cloud.points().map(|p| (4.0 * p[0]).sin() + p[1]).collect();
    let bundle = compress_field("f", &f, 0, 1, 6).unwrap();
    let cfg = StompConfig::default();
    let clod = reconstruct_clod(&bundle, &cloud, 3, 2, &cfg, Some(&f)).unwrap();
    let full = reconstruct_full(&bundle, &cloud, 3, &cfg).unwrap();
    assert_eq!(clod.levels.len(), 1);
    assert_eq!(bits(&clod.field), bits(&full.field));
}

#[test]
fn clod_visits_stride_levels() {
    let (cloud, g) = small_mesh();
    let bundle = compress_field("g", &g, 0, 5, 500).unwrap();
    let report =
        reconstruct_clod(&bundle, &cloud, 2, 2, &StompConfig::default(), Some(&g)).unwrap();
    let rec = Reconstructor::new(&bundle, &cloud, 2).unwrap();
    let expect = clod_levels(rec.num_levels(), 2).unwrap();
    let visited: Vec<usize> = report.levels.iter().map(|r| r.level).collect();
    assert_eq!(visited, expect);
    assert!(report.levels.last().unwrap().error.unwrap() < 1.0);
}

#[test]
fn warm_start_from_exact_solution_stops_immediately() {
    let cloud = gen_uniform(800, 2, 4).unwrap();
    let (_, basis) = build_for_cloud(&cloud, 3).unwrap();
    let top = basis.num_levels();
    let mut truth = vec![0.0; cloud.len()];
    [5usize, 90, 410, 777].iter().for_each(|&i| truth[i] = 2.0);
    let phi = SignMatrix::new(BernoulliSpec::new(8, 120, cloud.len()).unwrap());
    let mut y = vec![0.0; 120];
    phi.apply(&basis.apply(&truth, top).unwrap(), &mut y);

    let rec = Reconstructor::with_sampler(Box::new(phi), y, &cloud, 3).unwrap();
    let cfg = StompConfig {
        initial_guess: Some(truth.clone()),
        ..StompConfig::default()
    };
    let sol = rec.solve_level(top, &cfg).unwrap();
    assert!(sol.stomp.converged);
    assert_eq!(sol.stomp.stages_used, 0);
    assert_eq!(sol.coefficients, truth);
}

fn partition_bundles(field: &[f64], ranks: usize, samples_per_rank: usize) -> Vec<SampleBundle> {
    partition_indices(field.len(), ranks)
        .unwrap()
        .into_iter()
        .map(|p| {
            compress_field(
                "g",
                &field[p.indices.clone()],
                p.rank_id,
                9,
                samples_per_rank,
            )
            .unwrap()
        })
        .collect()
}

#[test]
fn one_partition_matches_unpartitioned() {
    let (cloud, g) = small_mesh();
    let bundles = partition_bundles(&g, 1, 300);
    let parts = partition_indices(cloud.len(), 1).unwrap();
    let cfg = StompConfig::default();
    let p = reconstruct_partitioned(&bundles, &cloud, &parts, 3, DetailLevel::Full, &cfg).unwrap();
    let single = reconstruct_full(&bundles[0], &cloud, 3, &cfg).unwrap();
    assert_eq!(bits(&p.field), bits(&single.field));
}

#[test]
fn partitions_assemble_independent_solves() {
    let (cloud, g) = small_mesh();
    let bundles = partition_bundles(&g, 2, 200);
    let parts = partition_indices(cloud.len(), 2).unwrap();
    let cfg = StompConfig::default();
    let assembled =
        reconstruct_partitioned(&bundles, &cloud, &parts, 3, DetailLevel::Full, &cfg).unwrap();
    let mut concat = Vec::new();
    for (b, p) in bundles.iter().zip(&parts) {
        let sub = cloud.slice(p.indices.clone()).unwrap();
        concat.extend(reconstruct_full(b, &sub, 3, &cfg).unwrap().field);
    }
    assert_eq!(bits(&assembled.field), bits(&concat));

    let mut reversed = bundles.clone();
    reversed.reverse();
    let again =
        reconstruct_partitioned(&reversed, &cloud, &parts, 3, DetailLevel::Full, &cfg).unwrap();
    assert_eq!(bits(&assembled.field), bits(&again.field));
}

#[test]
fn partition_mismatches_are_rejected() {
    let (cloud, g) = small_mesh();
    let parts = partition_indices(cloud.len(), 2).unwrap();
    let cfg = StompConfig::default();
    let bundles = partition_bundles(&g, 2, 100);

    let missing = &bundles[..1];
    assert!(matches!(
        reconstruct_partitioned(missing, &cloud, &parts, 2, DetailLevel::Full, &cfg),
        Err(Error::PartitionMismatch(_))
    ));
    let duplicate = vec![bundles[0].clone(), bundles[0].clone()];
    assert!(matches!(
        reconstruct_partitioned(&duplicate, &cloud, &parts, 2, DetailLevel::Full, &cfg),
        Err(Error::PartitionMismatch(_))
    ));
    let wrong_size = partition_bundles(&g[..cloud.len() - 1], 2, 100);
    assert!(
        reconstruct_partitioned(&wrong_size, &cloud, &parts, 2, DetailLevel::Full, &cfg).is_err()
    );
}

#[test]
fn bundle_cloud_mismatch_is_rejected() {
    let (cloud, g) = small_mesh();
    let bundle = compress_field("g", &g[..100], 0, 1, 10).unwrap();
    assert!(matches!(
        reconstruct_full(&bundle, &cloud, 3, &StompConfig::default()),
        Err(Error::LengthMismatch { .. })
    ));
}

#[test]
fn support_limit_is_reported_as_not_converged() {
    let (cloud, g) = small_mesh();
    let bundle = compress_field("g", &g, 0, 5, 40).unwrap();
    let cfg = StompConfig {
        threshold: 1.0,
        ..StompConfig::default()
    };
    let sol = reconstruct_full(&bundle, &cloud, 3, &cfg).unwrap();
    assert_eq!(sol.stomp.stop_reason, StopReason::SupportLimit);
    assert!(!sol.stomp.converged);
}
