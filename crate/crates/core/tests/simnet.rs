use proptest::prelude::*;
use sscada::report::{AttackVerdict, RunReport};
use sscada::scenario::Scenario;
use sscada::simnet::{sim_run, Direction, Origin, Transcript, TranscriptEvent};

const HEADER: &str = r#"
seed = 11
tick_limit = 1500

[[devices]]
id = "cc"
role = "master"

[[devices]]
id = "rtu"
role = "slave"
"#;

const CHANNELS: &str = r#"
[[channels]]
id = "tables"
kind = "broadcast"
endpoints = ["cc", "rtu"]
delta = 100
d = 1
chain_length = 15

[[channels]]
id = "alarm"
kind = "emergency-basic"
endpoints = ["cc", "rtu"]
via = "tables"
u = 2
v = 3
auto_recommit = false
"#;

fn traffic(tick: u64, action: &str, msg: Option<u16>) -> String {
    let msg = msg.map(|m| format!("msg = {m}\n")).unwrap_or_default();
    format!("\n[[traffic]]\ntick = {tick}\ndevice = \"cc\"\nchannel = \"alarm\"\naction = \"{action}\"\n{msg}")
}

fn run(text: &str) -> Transcript {
    let s = Scenario::from_toml_str(text).unwrap_or_else(|e| panic!("{e}\n{text}"));
    sim_run(&s).unwrap()
}

fn alarm_rx(t: &Transcript) -> Vec<&TranscriptEvent> {
    t.received().filter(|e| e.channel.as_deref() == Some("alarm")).collect()
}

fn detail<'a>(e: &'a TranscriptEvent, key: &str) -> Option<&'a str> {
    e.detail.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

#[test]
fn reveals_from_an_old_generation_are_rejected() {
    let link = r#"
[[links]]
id = "radio"
endpoints = ["cc", "rtu"]
latency = 5

[[links.adversary.rules]]
match = { type_byte = 0x45, count = 1 }
action = { kind = "record", tag = "rev" }

[[links.adversary.timed]]
at = 800
to = "rtu"
action = { kind = "replay", tag = "rev" }
"#;
    let text = [
        HEADER,
        link,
        CHANNELS,
        &traffic(10, "commit", None),
        &traffic(200, "emit", Some(1)),
        &traffic(400, "commit", None),
        &traffic(900, "emit", Some(1)),
    ]
    .concat();
    let t = run(&text);
    let rx = alarm_rx(&t);
    let statuses: Vec<(&str, Option<Origin>)> = rx.iter().map(|e| (e.status.as_str(), e.origin)).collect();
    assert_eq!(
        statuses,
        [
            ("TABLE_INSTALLED", None),
            ("ACCEPTED", None),
            ("TABLE_INSTALLED", None),
            ("REJECTED_NO_MATCH", Some(Origin::Replay)),
            ("ACCEPTED", None),
        ]
    );
    assert_eq!(detail(rx[2], "generation"), Some("2"));
    assert_eq!(RunReport::from_transcript(&t, None).attack, AttackVerdict::Defended { accepted: 0 });
}

#[test]
fn tampered_table_is_forged_and_the_old_one_stays() {
    let link = r#"
[[links]]
id = "radio"
endpoints = ["cc", "rtu"]
latency = 5

[[links.adversary.rules]]
match = { type_byte = 0x42, from = "cc", skip = 1, count = 1 }
action = { kind = "flip-bit", byte = -1, bit = 3 }
"#;
    let text = [
        HEADER,
        link,
        CHANNELS,
        &traffic(10, "commit", None),
        &traffic(400, "commit", None),
        &traffic(700, "emit", Some(2)),
    ]
    .concat();
    let t = run(&text);
    let forged: Vec<_> = t.received().filter(|e| e.status == "FORGED").collect();
    assert_eq!(forged.len(), 1);
    assert_eq!(forged[0].origin, Some(Origin::Tampered));
    let rx = alarm_rx(&t);
    let statuses: Vec<&str> = rx.iter().map(|e| e.status.as_str()).collect();
    // The receiver still holds generation 1, so a generation 2 reveal has
    // nothing to match.
    assert_eq!(statuses, ["TABLE_INSTALLED", "REJECTED_NO_MATCH"]);
    assert_eq!(detail(rx[0], "generation"), Some("1"));
}

#[test]
fn reveal_before_any_table_is_rejected() {
    let link = "\n[[links]]\nid = \"radio\"\nendpoints = [\"cc\", \"rtu\"]\nlatency = 5\n";
    // The table from the commit at 10 only settles when K_1 is disclosed
    // at 100; a reveal arriving at 55 finds no table.
    let text = [HEADER, link, CHANNELS, &traffic(10, "commit", None), &traffic(50, "emit", Some(1))].concat();
    let t = run(&text);
    let statuses: Vec<String> = alarm_rx(&t).iter().map(|e| e.status.clone()).collect();
    assert_eq!(statuses, ["REJECTED_NO_TABLE", "TABLE_INSTALLED"]);
}

#[test]
fn exhausted_message_reports_send_error_without_auto_recommit() {
    let link = "\n[[links]]\nid = \"radio\"\nendpoints = [\"cc\", \"rtu\"]\nlatency = 5\n";
    let mut parts = vec![HEADER.to_string(), link.to_string(), CHANNELS.to_string(), traffic(10, "commit", None)];
    for k in 0..4 {
        parts.push(traffic(200 + 10 * k, "emit", Some(1)));
    }
    let t = run(&parts.concat());
    let accepted = alarm_rx(&t).iter().filter(|e| e.status == "ACCEPTED").count();
    assert_eq!(accepted, 3);
    let err = t.events.iter().find(|e| e.dir == Direction::Tx && e.status == "SEND_ERROR").unwrap();
    assert_eq!(detail(err, "reason"), Some("USES_EXHAUSTED"));
}

fn p2p_scenario(seed: u64, loss: f64, latency: u64, sends: &[u64]) -> String {
    let mut s = format!(
        "seed = {seed}\ntick_limit = 100000\n\
         [[devices]]\nid = \"a\"\nrole = \"master\"\n\
         [[devices]]\nid = \"b\"\nrole = \"slave\"\n\
         [[links]]\nid = \"l\"\nendpoints = [\"a\", \"b\"]\nlatency = {latency}\nloss_rate = {loss}\n\
         [[channels]]\nid = \"c\"\nkind = \"p2p\"\nendpoints = [\"a\", \"b\"]\n"
    );
    for (k, tick) in sends.iter().enumerate() {
        let device = if k % 3 == 2 { "b" } else { "a" };
        s.push_str(&format!(
            "[[traffic]]\ntick = {tick}\ndevice = \"{device}\"\nchannel = \"c\"\naction = \"send\"\npayload = \"m{k}\"\n"
        ));
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Without an adversary every frame that was not lost arrives exactly
    /// once and nothing else arrives.
    #[test]
    fn frames_are_conserved(seed in 0..=i64::MAX as u64, loss in 0.0f64..0.6, latency in 0u64..20,
                            gaps in prop::collection::vec(1u64..30, 1..40)) {
        let sends: Vec<u64> = gaps.iter().scan(0u64, |t, g| { *t += g; Some(*t) }).collect();
        let t = run(&p2p_scenario(seed, loss, latency, &sends));
        let sent: Vec<&TranscriptEvent> = t.events.iter()
            .filter(|e| e.dir == Direction::Tx && e.status == "SENT")
            .collect();
        prop_assert_eq!(sent.len(), sends.len());
        let kept: Vec<&Vec<u8>> = sent.iter().filter(|e| detail(e, "lost").is_none()).map(|e| &e.bytes).collect();
        let arrived: Vec<&Vec<u8>> = t.received().map(|e| &e.bytes).collect();
        prop_assert_eq!(arrived.len(), kept.len());
        for e in t.received() {
            prop_assert_eq!(e.origin, None);
        }
        let mut sorted_kept = kept.clone();
        sorted_kept.sort();
        let mut sorted_arrived = arrived.clone();
        sorted_arrived.sort();
        prop_assert_eq!(sorted_kept, sorted_arrived);
    }
}
