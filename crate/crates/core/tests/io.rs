use std::fs;

use nyqgp::fit::{fit, make_fixed_noise_scenarios, make_scenarios, NoiseEstimate};
use nyqgp::gp::TimeSeries;
use nyqgp::harness::{
    emit_report, fit_plotdata, ingest_csv, read_fit_records, run_synthetic_experiment, write_fit_records,
    write_long_csv, BatchReport, CsvFormat, ReportThresholds, SyntheticConfig, TestGrid, REPORT_TABLES,
};
use nyqgp::kernels::KernelFamily;
use nyqgp::Error;

fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn minimal_wide_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, "w.csv", "id,t=0,t=1\ng1,0.5,-0.25\n");
    let s = ingest_csv(&p, CsvFormat::Auto).unwrap();
    assert_eq!(s.len(), 1);
    assert_eq!(s[0].id, "g1");
    assert_eq!(s[0].times, vec![0.0, 1.0]);
    assert_eq!(s[0].values, vec![0.5, -0.25]);
    assert!(s[0].noise_variances.is_none());
}

#[test]
fn wide_file_with_gaps_and_variances() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        &dir,
        "w.csv",
        "id,0,2,5,var:0,var:2,var:5\na,1,2,3,0.1,0.2,0.3\nb,4,,6,0.1,,0.3\n",
    );
    let s = ingest_csv(&p, CsvFormat::Wide).unwrap();
    assert_eq!(s[1].times, vec![0.0, 5.0]);
    assert_eq!(s[1].noise_variances.as_deref(), Some(&[0.1, 0.3][..]));
    assert_eq!(s[0].noise_variances.as_deref(), Some(&[0.1, 0.2, 0.3][..]));
}

#[test]
fn long_file_with_variances_gives_a_fixed_noise_fit() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("id,time,value,variance\n");
    for i in 0..6 {
        let t = i as f64;
        text += &format!("g,{t},{},{}\n", (0.7 * t).sin(), 0.01 + 0.005 * t);
    }
    let p = write(&dir, "l.csv", &text);
    let s = ingest_csv(&p, CsvFormat::Auto).unwrap();
    assert_eq!(s.len(), 1);
    let family = KernelFamily::SquaredExponential;
    let scenarios = make_fixed_noise_scenarios(&s[0], family, 0.99).unwrap();
    let r = fit(&s[0], family, &scenarios[2], 0).unwrap();
    assert_eq!(r.noise_variance, NoiseEstimate::Fixed);
}

#[test]
fn malformed_inputs_are_reported_with_location() {
    let dir = tempfile::tempdir().unwrap();

    let p = write(&dir, "a.csv", "id,time,value\ng,0,1\ng,1,oops\n");
    match ingest_csv(&p, CsvFormat::Long) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }

    let p = write(&dir, "b.csv", "id,time\ng,0\n");
    assert!(matches!(ingest_csv(&p, CsvFormat::Long), Err(Error::MissingColumn { column, .. }) if column == "value"));

    let p = write(&dir, "c.csv", "id,time,value\ng,0,1\ng,2,1\ng,1,1\n");
    match ingest_csv(&p, CsvFormat::Auto) {
        Err(Error::NonMonotonic { id, line, .. }) => assert_eq!((id.as_str(), line), ("g", 4)),
        other => panic!("{other:?}"),
    }

    let p = write(&dir, "d.csv", "id,t=1,t=0\ng,1,2\n");
    assert!(matches!(ingest_csv(&p, CsvFormat::Wide), Err(Error::NonMonotonic { .. })));

    let p = write(&dir, "e.csv", "id,time,value,variance\ng,0,1,0.1\ng,1,1,\n");
    assert!(matches!(ingest_csv(&p, CsvFormat::Long), Err(Error::Parse { .. })));

    for e in [
        ingest_csv(dir.path().join("a.csv"), CsvFormat::Long).unwrap_err(),
        ingest_csv(dir.path().join("b.csv"), CsvFormat::Long).unwrap_err(),
    ] {
        assert!(e.is_data_error());
    }
}

#[test]
fn export_then_ingest_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let set = vec![
        TimeSeries::new("x", vec![-1.5, 0.1, 1e-7 + 3.0], vec![1.0 / 3.0, -2e-9, 7.25], Some(vec![0.1, 0.2, 1e-12])).unwrap(),
        TimeSeries::new("y", vec![0.0, 10.0], vec![1e20, -0.0], Some(vec![0.0, 0.5])).unwrap(),
    ];
    let p = dir.path().join("out.csv");
    write_long_csv(&set, &p).unwrap();
    assert_eq!(ingest_csv(&p, CsvFormat::Auto).unwrap(), set);
}

fn small_experiment() -> nyqgp::harness::ExperimentOutput {
    let config = SyntheticConfig {
        replicates: 6,
        restarts: 2,
        test_grid: TestGrid { lo: -6.0, hi: 5.0, count: 10 },
        ..SyntheticConfig::default()
    };
    run_synthetic_experiment(&config, &[5, 8], KernelFamily::SquaredExponential).unwrap()
}

#[test]
fn report_tables_round_trip_within_print_precision() {
    let out = small_experiment();
    let dir = tempfile::tempdir().unwrap();
    emit_report(&out.report, dir.path()).unwrap();
    let getters: [fn(&nyqgp::harness::CellStats) -> Option<f64>; 6] = [
        |c| c.overfit_fraction_length_scale(),
        |c| c.overfit_fraction_noise(),
        |c| c.low_loglik_fraction(),
        |c| c.high_mse_fraction(),
        |c| c.win_fraction_loglik(),
        |c| c.win_fraction_mse(),
    ];
    for ((name, _), get) in REPORT_TABLES.iter().zip(getters) {
        let mut r = csv::Reader::from_path(dir.path().join(name)).unwrap();
        assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), ["scenario", "label", "5", "8"]);
        let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
        assert_eq!(rows.len(), 4);
        for (s, row) in rows.iter().enumerate() {
            assert_eq!(row[0].parse::<usize>().unwrap(), s + 1);
            for (g, group) in ["5", "8"].iter().enumerate() {
                let want = get(out.report.cell(s, group).unwrap()).unwrap();
                let got: f64 = row[2 + g].parse().unwrap();
                assert!((got - want).abs() <= 5e-5, "{name} {s} {group}");
            }
        }
    }
}

#[test]
fn empty_group_list_writes_header_only_tables() {
    let report = BatchReport::from_records(
        &[],
        vec!["a".into(), "b".into()],
        vec![],
        ReportThresholds { alpha: 0.99, noise_threshold: 1e-4, loglik_threshold: -20.0, mse_threshold: 0.1 },
    );
    let dir = tempfile::tempdir().unwrap();
    emit_report(&report, dir.path()).unwrap();
    for (name, _) in REPORT_TABLES {
        assert_eq!(fs::read_to_string(dir.path().join(name)).unwrap(), "scenario,label\n");
    }
}

#[test]
fn fit_records_rebuild_the_same_report() {
    let out = small_experiment();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("fits.csv");
    write_fit_records(&out.records, &p).unwrap();
    let back = read_fit_records(&p).unwrap();
    assert_eq!(back, out.records);
    let rebuilt = BatchReport::from_records(
        &back,
        out.report.scenario_labels.clone(),
        out.report.groups.clone(),
        out.report.thresholds,
    );
    assert_eq!(rebuilt, out.report);
}

#[test]
fn plot_data_bands_and_training_rows() {
    let s = TimeSeries::new("p", vec![0.0, 1.0, 2.5, 4.0], vec![0.2, 1.0, -0.4, 0.3], None).unwrap();
    let family = KernelFamily::SquaredExponential;
    let sc = &make_scenarios(&s, family, 0.99).unwrap()[3];
    let r = fit(&s, family, sc, 0).unwrap();
    let rows = fit_plotdata(&s, &r, 25).unwrap();
    assert!(rows.windows(2).all(|w| w[0].time < w[1].time));
    assert_eq!(rows.iter().filter(|x| x.is_training_point).count(), 4);
    let model = r.model(&s).unwrap();
    let times: Vec<f64> = rows.iter().map(|x| x.time).collect();
    let post = model.posterior_at(&times);
    for (i, row) in rows.iter().enumerate() {
        assert!(row.observed_sd >= row.latent_sd);
        assert_eq!(row.mean, post.mean[i]);
        assert_eq!(row.is_training_point, row.training_value.is_some());
    }

    // known zero noise: the curve passes through the data
    let exact = TimeSeries::new("z", s.times.clone(), s.values.clone(), Some(vec![0.0; 4])).unwrap();
    let sc = &make_fixed_noise_scenarios(&exact, family, 0.99).unwrap()[2];
    let r = fit(&exact, family, sc, 0).unwrap();
    for row in fit_plotdata(&exact, &r, 9).unwrap().iter().filter(|x| x.is_training_point) {
        assert!(row.latent_sd < 1e-3, "{row:?}");
        assert!((row.mean - row.training_value.unwrap()).abs() < 1e-3);
    }
    assert!(fit_plotdata(&s, &r, 1).is_err());
}
