use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_indicators"));
    c.env("RUST_LOG", "off");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn ok(args: &[&str]) -> Output {
    let o = run(args);
    assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, kind: &str, seed: u64) -> PathBuf {
    let out = dir.join(format!("data_{kind}_{seed}"));
    ok(&["synth", kind, "--seed", &seed.to_string(), "--out", s(&out)]);
    out
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

/// Every file under `dir`, keyed by relative path.
fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn steps_on_synthetic_gait() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), "gait", 3);
    let out = tmp.path().join("o");
    ok(&["steps", s(&data.join("gait.csv")), "--device", "phone", "--truth", "64", "--out", s(&out)]);
    let r = json(&out.join("steps.json"));
    assert_eq!(r["count"], 60);
    assert_eq!(r["abs_error"], 4);
    assert_eq!(r["rel_error_pct"], 6.25);
    assert_eq!(json(&data.join("gait_truth.json"))["count"], 60);

    ok(&["steps", s(&data.join("gait.csv")), "--device", "watch", "--out", s(&out)]);
    assert_eq!(json(&out.join("steps.json"))["device"], "watch");
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), "gait", 1);
    let gait = data.join("gait.csv");
    let out = tmp.path().join("o");
    assert_eq!(code(&run(&["steps", s(&gait), "--device", "tablet", "--out", s(&out)])), 2);
    assert_eq!(code(&run(&["steps", "missing.csv", "--device", "phone", "--out", s(&out)])), 2);
    assert_eq!(code(&run(&["activity", "train", s(&tmp.path().join("nowhere")), "--out", s(&out)])), 2);
    assert_eq!(code(&run(&["steps", s(&gait), "--device", "phone", "--set", "no_such_key=1", "--out", s(&out)])), 2);
    assert_eq!(code(&run(&["steps", s(&gait), "--device", "phone", "--set", "eps_m=-3", "--out", s(&out)])), 2);
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "svm_c = \"ten\"\n").unwrap();
    assert_eq!(code(&run(&["steps", s(&gait), "--device", "phone", "--config", s(&cfg), "--out", s(&out)])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
}

#[test]
fn data_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "t,ax,ay,az\n0,1,2,3\n0.01,1,2\n").unwrap();
    let out = tmp.path().join("o");
    let o = run(&["steps", s(&bad), "--device", "phone", "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.csv:3"));

    fs::write(&bad, "t,ax,ay,az\n0,1,2,3\n0,1,2,3\n").unwrap();
    assert_eq!(code(&run(&["steps", s(&bad), "--device", "phone", "--out", s(&out)])), 1);
}

#[test]
fn config_file_and_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), "gait", 2);
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, "phone_continuity_min = 100\nseed = 4\n").unwrap();
    let out = tmp.path().join("o");
    ok(&["steps", s(&data.join("gait.csv")), "--device", "phone", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(json(&out.join("steps.json"))["count"], 0);
    let written = fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(written.contains("phone_continuity_min = 100") && written.contains("seed = 4"));

    ok(&["steps", s(&data.join("gait.csv")), "--device", "phone", "--config", s(&cfg), "--set", "phone_continuity_min=8", "--seed", "9", "--out", s(&out)]);
    assert_eq!(json(&out.join("steps.json"))["count"], 60);
    assert!(fs::read_to_string(out.join("config.toml")).unwrap().contains("seed = 9"));
}

#[test]
fn activity_loso_eval_classify() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), "pamap2", 0);
    let two = tmp.path().join("two");
    fs::create_dir(&two).unwrap();
    for f in ["subject101.dat", "subject102.dat"] {
        fs::copy(data.join("pamap2").join(f), two.join(f)).unwrap();
    }
    let out = tmp.path().join("loso");
    ok(&["activity", "train", s(&two), "--loso", "--out", s(&out)]);
    let models: Vec<_> = fs::read_dir(out.join("models")).unwrap().collect();
    assert_eq!(models.len(), 2);
    let csv = fs::read_to_string(out.join("confusion.csv")).unwrap();
    assert!(csv.starts_with("actual\\predicted,lying,sitting,standing"));
    assert_eq!(json(&out.join("folds.json"))["folds"].as_array().unwrap().len(), 2);

    let eval = tmp.path().join("eval");
    ok(&["activity", "eval", s(&data.join("pamap2")), "--model", s(&out.join("models/subject101.json")), "--out", s(&eval)]);
    assert!(fs::read_to_string(eval.join("confusion.csv")).unwrap().starts_with("actual\\predicted"));
    assert!(json(&eval.join("eval.json"))["accuracy"].as_f64().unwrap() > 0.5);

    let gait = synth(tmp.path(), "gait", 0);
    let cls = tmp.path().join("cls");
    ok(&["activity", "classify", s(&gait.join("gait.csv")), "--model", s(&out.join("models/subject102.json")), "--out", s(&cls)]);
    assert!(fs::read_to_string(cls.join("activity_timeline.csv")).unwrap().starts_with("t_start,t_end,label\n"));

    // a transport-schema model is rejected as a data error
    let tr = synth(tmp.path(), "transport", 0);
    let tm = tmp.path().join("tm");
    ok(&["transport", "train", s(&tr.join("transport/train")), "--out", s(&tm)]);
    assert_eq!(code(&run(&["activity", "classify", s(&gait.join("gait.csv")), "--model", s(&tm.join("transport_model.json")), "--out", s(&cls)])), 1);
}

#[test]
fn visits_planted_straight_and_truth() {
    let tmp = tempfile::tempdir().unwrap();
    for seed in 0..3 {
        let data = synth(tmp.path(), "track", seed);
        let out = tmp.path().join(format!("v{seed}"));
        ok(&["visits", s(&data.join("track.csv")), "--truth", s(&data.join("track_truth.csv")), "--out", s(&out)]);
        let n_truth = fs::read_to_string(data.join("track_truth.csv")).unwrap().lines().count() - 1;
        let n_found = fs::read_to_string(out.join("visits.csv")).unwrap().lines().count() - 1;
        assert_eq!(n_found, n_truth);
        let m = json(&out.join("match.json"));
        assert_eq!(m["tp"], n_truth as u64);
        assert_eq!((m["fp"].as_u64(), m["fn"].as_u64()), (Some(0), Some(0)));
    }

    let straight = tmp.path().join("straight.csv");
    let mut body = String::from("t,lat,lon\n");
    for k in 0..400 {
        body += &format!("{},{:.7},-0.12\n", k * 10, 51.5 + k as f64 * 10.0 * 5.0 / 111_195.0);
    }
    fs::write(&straight, body).unwrap();
    let out = tmp.path().join("vs");
    ok(&["visits", s(&straight), "--out", s(&out)]);
    assert_eq!(fs::read_to_string(out.join("visits.csv")).unwrap(), "arrival_t,departure_t,lat,lon,n_points\n");
}

#[test]
fn transport_run_labels_rollup_and_skips() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), "transport", 1);
    let model = tmp.path().join("m");
    ok(&["transport", "train", s(&data.join("transport/train")), "--out", s(&model)]);
    let out = tmp.path().join("run");
    ok(&["transport", "run", s(&data.join("transport/session")), "--model", s(&model.join("transport_model.json")), "--out", s(&out)]);
    let trips = fs::read_to_string(out.join("trips.csv")).unwrap();
    assert!(trips.starts_with("trip,t_start,t_end,path_m,avg_speed_kmh,label,vehicle,truth,note\n"));
    assert_eq!(trips.lines().count(), 4);
    let r = json(&out.join("rollup.json"));
    assert!(r["vehicle"]["report"]["precision"].is_number() && r["vehicle"]["report"]["recall"].is_number());
    assert!(fs::read_to_string(out.join("per_class.csv")).unwrap().starts_with("class,precision,recall,support\n"));

    // cut the accelerometer during the first trip: that trip becomes invalid
    let session = data.join("transport/session");
    let accel = fs::read_to_string(session.join("accel.csv")).unwrap();
    let kept: Vec<&str> = accel
        .lines()
        .filter(|l| l.split(',').next().and_then(|t| t.parse::<f64>().ok()).is_none_or(|t| !(700.0..720.0).contains(&t)))
        .collect();
    fs::write(session.join("accel.csv"), kept.join("\n") + "\n").unwrap();
    let out2 = tmp.path().join("run2");
    let o = ok(&["transport", "run", s(&session), "--model", s(&model.join("transport_model.json")), "--out", s(&out2)]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("skipped"));
    let first = fs::read_to_string(out2.join("trips.csv")).unwrap().lines().nth(1).unwrap().to_string();
    assert!(first.ends_with("skipped: invalid trip"), "{first}");
}

#[test]
fn profile_rows_and_destinations() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), "user", 5);
    let out = tmp.path().join("p");
    ok(&["profile", s(&data.join("user")), s(&data.join("poi.csv")), "--out", s(&out)]);
    let p = json(&out.join("profile.json"));
    for row in ["Average hours of daily monitoring", "Daily steps", "Daily average activity counts per minute", "Weekly visits to cafes", "Weekly visits to school"] {
        assert!(p[row].as_f64().is_some_and(|v| v >= 0.0), "{row}");
    }
    // 200 and 250 planted steps on the two days
    assert_eq!(p["Daily steps"], 225.0);
    assert_eq!(fs::read_to_string(out.join("after_school.csv")).unwrap(), "destination,users\ncafe,1\n");

    let no_school = tmp.path().join("poi.csv");
    let poi: String = fs::read_to_string(data.join("poi.csv")).unwrap().lines().filter(|l| !l.ends_with("school")).map(|l| format!("{l}\n")).collect();
    fs::write(&no_school, poi).unwrap();
    let out2 = tmp.path().join("p2");
    ok(&["profile", s(&data.join("user")), s(&no_school), "--out", s(&out2)]);
    assert_eq!(fs::read_to_string(out2.join("after_school.csv")).unwrap(), "destination,users\nunknown,1\n");

    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert_eq!(code(&run(&["profile", s(&empty), s(&no_school), "--out", s(&out2)])), 2);
}

#[test]
fn same_seed_gives_byte_identical_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let runs = |tag: &str| -> BTreeMap<PathBuf, Vec<u8>> {
        let root = t.join(tag);
        let data = root.join("data");
        for kind in ["gait", "track", "pamap2", "transport", "user"] {
            ok(&["synth", kind, "--seed", "11", "--out", s(&data)]);
        }
        let o = |name: &str| s(&root.join(name)).to_string();
        let d = |rel: &str| s(&data.join(rel)).to_string();
        ok(&["steps", &d("gait.csv"), "--device", "phone", "--seed", "11", "--out", &o("steps")]);
        ok(&["steps", &d("gait.csv"), "--device", "watch", "--seed", "11", "--out", &o("watch")]);
        ok(&["visits", &d("track.csv"), "--truth", &d("track_truth.csv"), "--seed", "11", "--out", &o("visits")]);
        ok(&["activity", "train", &d("pamap2"), "--loso", "--seed", "11", "--out", &o("loso")]);
        ok(&["activity", "train", &d("pamap2"), "--seed", "11", "--out", &o("act")]);
        ok(&["activity", "eval", &d("pamap2"), "--model", &format!("{}/activity_model.json", o("act")), "--seed", "11", "--out", &o("eval")]);
        ok(&["activity", "classify", &d("gait.csv"), "--model", &format!("{}/activity_model.json", o("act")), "--seed", "11", "--out", &o("cls")]);
        ok(&["transport", "train", &d("transport/train"), "--seed", "11", "--out", &o("tr")]);
        ok(&["transport", "train", &d("transport/train"), "--loso", "--seed", "11", "--out", &o("trl")]);
        ok(&["transport", "run", &d("transport/session"), "--model", &format!("{}/transport_model.json", o("tr")), "--seed", "11", "--out", &o("run")]);
        ok(&["profile", &d("user"), &d("poi.csv"), "--seed", "11", "--out", &o("profile")]);
        tree(&root)
    };
    let (a, b) = (runs("a"), runs("b"));
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (k, v) in &a {
        assert!(b[k] == *v, "{} differs between runs", k.display());
    }
    assert!(a.len() > 40);

    let other = t.join("c");
    ok(&["synth", "gait", "--seed", "12", "--out", s(&other)]);
    assert_ne!(fs::read(other.join("gait.csv")).unwrap(), a[Path::new("data/gait.csv")]);
}
