use std::path::{Path, PathBuf};
use std::sync::Arc;

use ocp_core::cases::{channel_velocity_trajectory, transport_grid, CaseKind, TransportParams};
use ocp_core::forward::solve_state;
use ocp_core::io::{parse_config, parse_config_str, presets, resolve, to_toml, write_velocity_file};
use ocp_core::optimize::Control;

fn config_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn shipped_configs_parse_round_trip_and_resolve() {
    let mut seen = Vec::new();
    for entry in std::fs::read_dir(config_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("toml") {
            continue;
        }
        let cfg = parse_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(parse_config_str(&to_toml(&cfg)).unwrap(), cfg, "{}", path.display());
        let setup = resolve(&cfg, path.parent().unwrap()).unwrap();
        setup.case.check_consistency().unwrap();
        seen.push(setup.case.kind());
    }
    for kind in [
        CaseKind::Benchmark,
        CaseKind::LightDistributed,
        CaseKind::LightConcentrated1d,
        CaseKind::LightConcentrated2d,
        CaseKind::Transport,
    ] {
        assert!(seen.contains(&kind), "no shipped config for {kind:?}");
    }
}

#[test]
fn every_preset_resolves() {
    for p in presets() {
        let text = to_toml(&p.config);
        let cfg = parse_config_str(&text).unwrap();
        assert_eq!(cfg, p.config);
        if cfg.case.kind == "light_concentrated_2d" {
            // Target generation on 64 x 64 is covered by the acceptance runs.
            continue;
        }
        resolve(&cfg, Path::new(".")).unwrap_or_else(|e| panic!("{}: {e}", p.name));
    }
}

#[test]
fn velocity_file_matches_analytic_flow() {
    let dir = tempfile::tempdir().unwrap();
    let p = TransportParams {
        cells: [32, 16],
        t_final: 0.1,
        ..TransportParams::default()
    };
    let grid = Arc::new(transport_grid(&p).unwrap());
    let v = channel_velocity_trajectory(&grid, p.dt, 10, &p.flow).unwrap();
    write_velocity_file(&dir.path().join("flow.txt"), &v).unwrap();
    let base = "[case]\nkind = \"transport\"\ncells = [32, 16]\nt_final = 0.1\n";
    let from_file = parse_config_str(&format!("{base}[velocity]\nsource = \"file\"\npath = \"flow.txt\"\n")).unwrap();
    let analytic = parse_config_str(base).unwrap();
    let a = resolve(&from_file, dir.path()).unwrap().case;
    let b = resolve(&analytic, dir.path()).unwrap().case;
    let u = Control::constant(a.control, a.grid.clone(), a.dt, a.n_steps, 0.7).unwrap();
    let (ya, yb) = (solve_state(&a, &u).unwrap(), solve_state(&b, &u).unwrap());
    assert_eq!(ya.primary().last().values(), yb.primary().last().values());

    let short = parse_config_str("[case]\nkind = \"transport\"\ncells = [32, 16]\nt_final = 0.2\n[velocity]\nsource = \"file\"\npath = \"flow.txt\"\n").unwrap();
    assert!(resolve(&short, dir.path()).is_err());
}
