use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use infoloss::corpus::NormalizedCorpus;
use infoloss::harness::{build_report, fit_psychometric, Config, HUMAN};
use infoloss::infobounds::mi_from_pc;
use infoloss::listening::wire::{CreateSession, SubmitResponse};
use infoloss::listening::SessionResults;
use infoloss_client::{Client, SessionHandle};
use infoloss_service::{EventLog, Service, ServiceConfig};
use rand::{Rng, SeedableRng};
use tokio::sync::oneshot;

fn config(words: usize) -> Config {
    let mut c = Config::default();
    c.corpus.words = words;
    c.corpus.realizations = 3;
    c
}

fn corpus(cfg: &Config) -> NormalizedCorpus {
    let raw = cfg.load_corpus().unwrap();
    let mc = cfg.model_config(cfg.model.modes[0]).unwrap();
    NormalizedCorpus::new(&raw, &mc).unwrap()
}

struct Running {
    base: String,
    service: Arc<Service>,
    stop: oneshot::Sender<()>,
    task: tokio::task::JoinHandle<std::io::Result<()>>,
}

impl Running {
    async fn start(dir: &Path, cfg: &Config, with_corpus: bool) -> Self {
        let service = Arc::new(
            Service::open(
                ServiceConfig {
                    data_dir: dir.to_owned(),
                    session: cfg.session_config(),
                },
                with_corpus.then(|| corpus(cfg)),
            )
            .unwrap(),
        );
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let (stop, rx) = oneshot::channel();
        let task = tokio::spawn(infoloss_service::serve(listener, service.clone(), async {
            rx.await.ok();
        }));
        Running {
            base,
            service,
            stop,
            task,
        }
    }

    fn client(&self) -> Client {
        Client::new(&self.base)
    }

    async fn stop(self) {
        self.stop.send(()).unwrap();
        self.task.await.unwrap().unwrap();
    }
}

fn create(phase: &str, seed: u64) -> CreateSession {
    CreateSession {
        subject_id: "s01".into(),
        phase: phase.into(),
        seed: Some(seed),
    }
}

fn answer(choice: usize) -> SubmitResponse {
    SubmitResponse {
        choices: vec![choice],
        response_ms: Some(900),
    }
}

async fn open(c: &Client, phase: &str, seed: u64) -> SessionHandle {
    SessionHandle::from(&c.create_session(&create(phase, seed)).await.unwrap())
}

/// Answers every remaining trial with `pick(true word, trial index, SNR)`.
async fn run_session(
    run: &Running,
    s: &SessionHandle,
    mut pick: impl FnMut(usize, usize, f64) -> usize,
) -> SessionResults {
    let c = run.client();
    let plan = run.service.record(&s.session_id).await.unwrap().plan;
    let start = run
        .service
        .record(&s.session_id)
        .await
        .unwrap()
        .responses
        .len();
    for n in start + 1..=s.trial_count {
        c.trial(s, n).await.unwrap();
        c.audio(s, n).await.unwrap();
        let t = &plan.trials[n - 1];
        c.respond(s, n, &answer(pick(t.words[0], n, t.snr_db)))
            .await
            .unwrap();
    }
    c.results(s).await.unwrap()
}

#[tokio::test]
async fn session_creation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(10);
    let run = Running::start(dir.path(), &cfg, true).await;
    let c = run.client();
    let test = c.create_session(&create("test", 1)).await.unwrap();
    assert_eq!(test.trial_count, 48);
    assert_eq!(test.protocol, 1);
    let training = c.create_session(&create("training", 1)).await.unwrap();
    assert_eq!(training.trial_count, 12);
    let e = c.create_session(&create("warmup", 1)).await.unwrap_err();
    assert_eq!(
        (e.status().unwrap().as_u16(), e.code()),
        (422, Some("validation"))
    );
    assert!(EventLog::path_for(dir.path(), &test.session_id).exists());
    run.stop().await;

    let empty = tempfile::tempdir().unwrap();
    let run = Running::start(empty.path(), &cfg, false).await;
    let e = run
        .client()
        .create_session(&create("test", 1))
        .await
        .unwrap_err();
    assert_eq!(
        (e.status().unwrap().as_u16(), e.code()),
        (503, Some("unavailable"))
    );
    run.stop().await;
}

#[tokio::test]
async fn forced_order_and_forced_choice() {
    let dir = tempfile::tempdir().unwrap();
    let run = Running::start(dir.path(), &config(10), true).await;
    let c = run.client();
    let s = open(&c, "test", 3).await;

    let view = c.trial(&s, 1).await.unwrap();
    assert_eq!(view.slots.len(), 1);
    assert_eq!(view.slots[0].candidates.len(), 10);
    assert!(!view.replay_allowed);
    let wav = c.audio(&s, 1).await.unwrap();
    assert_eq!((&wav[..4], &wav[8..12]), (&b"RIFF"[..], &b"WAVE"[..]));

    let e = c.trial(&s, 5).await.unwrap_err();
    assert_eq!(e.status().unwrap().as_u16(), 409);
    let e = c.respond(&s, 5, &answer(0)).await.unwrap_err();
    assert_eq!(e.status().unwrap().as_u16(), 409);

    let e = c
        .respond(
            &s,
            1,
            &SubmitResponse {
                choices: vec![],
                response_ms: None,
            },
        )
        .await
        .unwrap_err();
    assert_eq!(e.status().unwrap().as_u16(), 422);
    assert!(
        e.to_string().contains("forced-choice requires a selection"),
        "{e}"
    );
    let e = c.respond(&s, 1, &answer(10)).await.unwrap_err();
    assert_eq!(e.status().unwrap().as_u16(), 422);

    let a = c.respond(&s, 1, &answer(4)).await.unwrap();
    assert!(a.accepted && !a.complete);
    assert_eq!(a.next, Some(2));
    let again = c.respond(&s, 1, &answer(4)).await.unwrap();
    assert_eq!(again, a);
    let e = c.respond(&s, 1, &answer(5)).await.unwrap_err();
    assert_eq!(e.code(), Some("conflict"));
    let e = c.trial(&s, 1).await.unwrap_err();
    assert_eq!(e.status().unwrap().as_u16(), 409);

    let e = c.results(&s).await.unwrap_err();
    assert_eq!(e.status().unwrap().as_u16(), 409);

    let intruder = SessionHandle {
        token: "not-the-token".into(),
        ..s.clone()
    };
    let e = c.trial(&intruder, 2).await.unwrap_err();
    assert_eq!(
        (e.status().unwrap().as_u16(), e.code()),
        (401, Some("unauthorized"))
    );
    let ghost = SessionHandle {
        session_id: "nope".into(),
        ..s.clone()
    };
    assert_eq!(
        c.trial(&ghost, 1)
            .await
            .unwrap_err()
            .status()
            .unwrap()
            .as_u16(),
        404
    );

    run_session(&run, &s, |w, _, _| w).await;
    let e = c.trial(&s, 48).await.unwrap_err();
    assert_eq!(
        (e.status().unwrap().as_u16(), e.code()),
        (410, Some("gone"))
    );
    let e = c.respond(&s, 49, &answer(0)).await.unwrap_err();
    assert_eq!(e.status().unwrap().as_u16(), 422);
    run.stop().await;
}

#[tokio::test]
async fn snr_is_never_sent_before_completion() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(10);
    let run = Running::start(dir.path(), &cfg, true).await;
    let http = reqwest::Client::new();
    let base = run.base.clone();
    let mut traffic: Vec<Vec<u8>> = Vec::new();

    let created = http
        .post(format!("{base}/sessions"))
        .json(&create("training", 11))
        .send()
        .await
        .unwrap()
        .bytes()
        .await
        .unwrap()
        .to_vec();
    let v: serde_json::Value = serde_json::from_slice(&created).unwrap();
    let (id, token) = (
        v["session_id"].as_str().unwrap().to_string(),
        v["token"].as_str().unwrap().to_string(),
    );
    traffic.push(created);
    let plan = run.service.record(&id).await.unwrap().plan;
    let n = plan.len();
    for t in 1..=n {
        for path in [format!("trials/{t}"), format!("trials/{t}/audio")] {
            let r = http
                .get(format!("{base}/sessions/{id}/{path}"))
                .bearer_auth(&token)
                .send()
                .await
                .unwrap();
            assert!(r.status().is_success());
            traffic.push(r.bytes().await.unwrap().to_vec());
        }
        let r = http
            .post(format!("{base}/sessions/{id}/trials/{t}/response"))
            .bearer_auth(&token)
            .json(&answer(plan.trials[t - 1].words[0]))
            .send()
            .await
            .unwrap();
        traffic.push(r.bytes().await.unwrap().to_vec());
        if t < n {
            let r = http
                .get(format!("{base}/sessions/{id}/results"))
                .bearer_auth(&token)
                .send()
                .await
                .unwrap();
            assert_eq!(r.status().as_u16(), 409);
            traffic.push(r.bytes().await.unwrap().to_vec());
        }
    }
    let needles: Vec<String> = cfg
        .service
        .snr_db
        .iter()
        .filter(|s| **s != 0.0)
        .map(|s| format!("{s}"))
        .chain(["snr".to_string(), "SNR".to_string(), "db\"".to_string()])
        .collect();
    for body in &traffic {
        for needle in &needles {
            assert!(
                !body.windows(needle.len()).any(|w| w == needle.as_bytes()),
                "{needle:?} found in {}",
                String::from_utf8_lossy(body)
            );
        }
    }
    let results = http
        .get(format!("{base}/sessions/{id}/results"))
        .bearer_auth(&token)
        .send()
        .await
        .unwrap();
    assert!(String::from_utf8(results.bytes().await.unwrap().to_vec())
        .unwrap()
        .contains("snr_db"));
    run.stop().await;
}

#[tokio::test]
async fn acknowledged_responses_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(10);
    let run = Running::start(dir.path(), &cfg, true).await;
    let c = run.client();
    let s = open(&c, "test", 5).await;
    let plan = run.service.record(&s.session_id).await.unwrap().plan;
    for n in 1..=10 {
        c.respond(&s, n, &answer(plan.trials[n - 1].words[0]))
            .await
            .unwrap();
    }
    let audio_before = c.audio(&s, 11).await.unwrap();
    run.stop().await;

    // a crash in the middle of writing an unacknowledged response
    let log = EventLog::path_for(dir.path(), &s.session_id);
    std::fs::OpenOptions::new()
        .append(true)
        .open(&log)
        .unwrap()
        .write_all(br#"{"event":"response","trial":11,"resp"#)
        .unwrap();

    let run = Running::start(dir.path(), &cfg, true).await;
    let c = run.client();
    let record = run.service.record(&s.session_id).await.unwrap();
    assert_eq!(record.responses.len(), 10);
    assert_eq!(record.plan, plan);
    assert_eq!(c.trial(&s, 11).await.unwrap().trial, 11);
    assert_eq!(c.audio(&s, 11).await.unwrap(), audio_before);
    assert_eq!(
        c.respond(&s, 10, &answer(plan.trials[9].words[0]))
            .await
            .unwrap()
            .next,
        Some(11)
    );
    let results = run_session(&run, &s, |w, _, _| w).await;
    assert!(results.points.iter().all(|p| p.p_c == 1.0));
    run.stop().await;

    let lines = std::fs::read_to_string(&log).unwrap();
    assert_eq!(lines.lines().count(), 1 + 48);
    assert!(lines.ends_with('\n'));
}

#[tokio::test]
async fn truthful_responder_is_at_ceiling() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(10);
    let run = Running::start(dir.path(), &cfg, true).await;
    let s = open(&run.client(), "test", 8).await;
    let results = run_session(&run, &s, |w, _, _| w).await;
    assert_eq!(results.points.len(), 6);
    for p in &results.points {
        assert_eq!((p.p_c, p.n_trials), (1.0, 8));
    }
    let e = fit_psychometric(&results.psych_points(), 10).unwrap_err();
    assert_eq!(e.to_string(), "ill-conditioned fit");
    run.stop().await;
}

#[tokio::test]
async fn uniform_responder_carries_no_information() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(10);
    let run = Running::start(dir.path(), &cfg, true).await;
    let mut rng = rand::rngs::StdRng::seed_from_u64(99);
    let mut sessions = Vec::new();
    for i in 0..25 {
        let s = open(&run.client(), "test", 100 + i).await;
        sessions.push(run_session(&run, &s, |_, _, _| rng.random_range(0..10)).await);
    }
    let pooled = SessionResults::pool(&sessions).unwrap();
    for p in &pooled.points {
        assert_eq!(p.n_trials, 200);
        let se = (0.1f64 * 0.9 / 200.0).sqrt();
        assert!(
            (p.p_c - 0.1).abs() < 3.0 * se,
            "{} dB: P_c {}",
            p.snr_db,
            p.p_c
        );
        assert!(
            mi_from_pc(p.p_c, 10).unwrap() < 0.03,
            "{} dB: P_c {}",
            p.snr_db,
            p.p_c
        );
    }
    run.stop().await;
}

#[tokio::test]
async fn a_full_session_joins_the_sweep_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(4);
    cfg.sweep.snr_db = vec![-20.0, 0.0];
    cfg.sweep.trials_per_fold = 2;
    let raw = cfg.load_corpus().unwrap();
    let run = Running::start(dir.path(), &cfg, true).await;
    let s = open(&run.client(), "test", 21).await;
    assert_eq!(s.trial_count, 48);
    // right above -10 dB, a fixed wrong word below
    let results = run_session(
        &run,
        &s,
        |w, _, snr| if snr > -10.0 { w } else { (w + 1) % 4 },
    )
    .await;
    run.stop().await;

    let mut report = build_report(&raw, &cfg).unwrap();
    let machine_rows = report.rows.len();
    report.merge_human(&raw, &results).unwrap();
    let human: Vec<_> = report
        .rows
        .iter()
        .filter(|r| r.classifier == HUMAN)
        .collect();
    assert_eq!(report.rows.len(), machine_rows + human.len());
    assert_eq!(human.len(), 6 * cfg.model.modes.len());
    for r in &human {
        let p = results
            .points
            .iter()
            .find(|p| p.snr_db == r.snr_db)
            .unwrap();
        assert_eq!((r.p_c, r.n_trials), (p.p_c, p.n_trials));
        assert!(0.0 <= r.loss.l_lower && r.loss.l_lower <= r.loss.l_upper && r.loss.l_upper <= 1.0);
        if r.p_c == 0.0 {
            assert_eq!((r.i_mm_uniform, r.loss.l_upper), (0.0, 1.0));
        } else {
            assert!(r.i_mm_uniform > 0.0);
        }
    }
    let csv = report.to_csv().unwrap();
    assert_eq!(
        csv.lines().filter(|l| l.contains(",human,")).count(),
        human.len()
    );
}
