mod common;

use std::collections::BTreeMap;

use chaoscycle::agent::ledger::Usage;
use chaoscycle::agent::schema::{parse_structured_output, prefill_for, FieldKind, OutputSchema, SchemaField};
use chaoscycle::agent::{ledger_cost, verification_loop, CostLedger, LoopOutcome, Pricing};
use chaoscycle::compiler::{compile, CompileOptions, Grouping, Stage};
use chaoscycle::duration::{parse_duration, Duration};
use chaoscycle::faults::{parse_fault_template, render_fault_body, validate_fault};
use chaoscycle::model::FaultKind;
use chaoscycle::simulator::{build_cluster, simulate, timeline_check, SimOptions};
use common::*;
use proptest::prelude::*;
use serde_json::{json, Value};

fn compiled(plan: &chaoscycle::compiler::ExperimentPlan, grouping: Grouping) -> chaoscycle::compiler::WorkflowNode {
    let options = CompileOptions {
        grouping,
        ..CompileOptions::default()
    };
    compile(plan, &plan_hypothesis(), &options).expect("generated plans are valid")
}

fn check_structure(plan: &chaoscycle::compiler::ExperimentPlan, grouping: Grouping) -> Result<(), TestCaseError> {
    let tree = compiled(plan, grouping);
    let expected_leaves: usize = Stage::ALL.iter().map(|s| planned_items(plan, *s).len()).sum();
    prop_assert_eq!(tree.work_leaves().len(), expected_leaves);
    let bodies = stage_bodies(&tree).map_err(TestCaseError::fail)?;
    for (stage, body) in Stage::ALL.into_iter().zip(bodies) {
        let actual = scheduled_items(body, grouping == Grouping::PerItem).map_err(TestCaseError::fail)?;
        prop_assert_eq!(actual, planned_items(plan, stage), "stage {}", stage);
    }
    check_deadlines(&tree, CompileOptions::default().pad).map_err(TestCaseError::fail)?;
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn per_item_grouping_wraps_each_delayed_item(plan in arb_plan()) {
        check_structure(&plan, Grouping::PerItem)?;
    }

    #[test]
    fn coalesced_grouping_preserves_every_window(plan in arb_plan()) {
        check_structure(&plan, Grouping::Coalesced)?;
    }

    #[test]
    fn simulated_windows_start_at_offset_plus_grace(plan in arb_plan(), seed in any::<u64>()) {
        let cluster = build_cluster(sockshop());
        for grouping in [Grouping::Coalesced, Grouping::PerItem] {
            let (timeline, _) = simulate(&compiled(&plan, grouping), &cluster, seed, &SimOptions::default()).unwrap();
            prop_assert_eq!(timeline_check(&timeline, &plan), Ok(()));
            prop_assert_eq!(timeline.end, plan.total_time.secs());
        }
    }
}

fn round_trip(fault: chaoscycle::model::Fault) -> Result<(), TestCaseError> {
    prop_assert!(validate_fault(&fault).is_ok(), "{:?}", validate_fault(&fault));
    let (key, body) = render_fault_body(&fault).unwrap();
    let template = json!({"name": "f", "templateType": fault.kind.as_str(), key: body});
    let text = serde_yaml::to_string(&template).unwrap();
    let back: Value = serde_yaml::from_str(&text).unwrap();
    let parsed = parse_fault_template(&back, fault.name_id).unwrap();
    prop_assert_eq!(parsed.kind, fault.kind);
    prop_assert_eq!(parsed.name_id, fault.name_id);
    let (key2, body2) = render_fault_body(&parsed).unwrap();
    prop_assert_eq!(key2, key);
    prop_assert_eq!(body2, body, "yaml was:\n{}", text);
    Ok(())
}

macro_rules! fault_round_trips {
    ($($test:ident => $kind:expr),+ $(,)?) => {
        proptest! {
            #![proptest_config(ProptestConfig::with_cases(256))]
            $(
                #[test]
                fn $test(fault in arb_fault($kind)) {
                    round_trip(fault)?;
                }
            )+
        }
    };
}

fault_round_trips! {
    pod_chaos_round_trips => FaultKind::PodChaos,
    network_chaos_round_trips => FaultKind::NetworkChaos,
    dns_chaos_round_trips => FaultKind::DnsChaos,
    http_chaos_round_trips => FaultKind::HttpChaos,
    stress_chaos_round_trips => FaultKind::StressChaos,
    io_chaos_round_trips => FaultKind::IoChaos,
    time_chaos_round_trips => FaultKind::TimeChaos,
}

fn reply_schema() -> impl Strategy<Value = (OutputSchema, Vec<(String, Value)>)> {
    prop::collection::btree_map(
        "[a-z][a-z_]{0,10}",
        prop_oneof![
            "[ -~]{0,20}".prop_map(|s| (FieldKind::String, json!(s))),
            any::<i32>().prop_map(|n| (FieldKind::Integer, json!(n))),
            any::<bool>().prop_map(|b| (FieldKind::Boolean, json!(b))),
        ],
        1..5,
    )
    .prop_shuffle_fields()
}

trait ShuffleFields {
    fn prop_shuffle_fields(self) -> BoxedStrategy<(OutputSchema, Vec<(String, Value)>)>;
}

impl<S: Strategy<Value = BTreeMap<String, (FieldKind, Value)>> + 'static> ShuffleFields for S {
    fn prop_shuffle_fields(self) -> BoxedStrategy<(OutputSchema, Vec<(String, Value)>)> {
        self.prop_map(|m| m.into_iter().collect::<Vec<_>>())
            .prop_shuffle()
            .prop_map(|fields| {
                let schema = OutputSchema::new(fields.iter().map(|(n, (k, _))| SchemaField::new(n, *k)).collect());
                let values = fields.into_iter().map(|(n, (_, v))| (n, v)).collect();
                (schema, values)
            })
            .boxed()
    }
}

proptest! {
    #[test]
    fn durations_round_trip(secs in 0u64..10_000_000) {
        let d = Duration::from_secs(secs);
        prop_assert_eq!(parse_duration(&d.to_string()), Ok(d));
    }

    #[test]
    fn duration_components_add(h in 0u64..100, m in 0u64..1000, s in 0u64..1000) {
        let text = format!("{h}h{m}m{s}s");
        prop_assert_eq!(parse_duration(&text).unwrap().secs(), h * 3600 + m * 60 + s);
    }

    #[test]
    fn prefilled_replies_parse_to_the_full_object((schema, fields) in reply_schema(), fenced in any::<bool>()) {
        let body: Vec<String> = fields.iter().map(|(k, v)| format!("{}:{}", json!(k), v)).collect();
        let full = format!("{{{}}}", body.join(","));
        let prefill = prefill_for(&schema).unwrap();
        prop_assert!(full.starts_with(&prefill));
        let continuation = &full[prefill.len()..];
        let expected = Value::Object(fields.into_iter().collect());
        prop_assert_eq!(parse_structured_output(continuation, &schema), Ok(expected.clone()));
        let whole = if fenced { format!("```json\n{full}\n```") } else { full.clone() };
        prop_assert_eq!(parse_structured_output(&whole, &schema), Ok(expected));
    }

    #[test]
    fn ledger_cost_is_additive(
        a in prop::collection::vec((0usize..6, 0u64..1_000_000, 0u64..100_000), 0..20),
        b in prop::collection::vec((0usize..6, 0u64..1_000_000, 0u64..100_000), 0..20),
    ) {
        const PHASES: [&str; 6] = ["preprocess", "hypothesis", "experiment", "analysis", "improvement", "postprocess"];
        let fill = |rows: &[(usize, u64, u64)]| {
            let mut l = CostLedger::new(Pricing::default());
            for &(p, i, o) in rows {
                l.record(PHASES[p], Usage { input_tokens: i, output_tokens: o });
            }
            l
        };
        let (la, lb) = (fill(&a), fill(&b));
        let t = la.totals();
        prop_assert_eq!(ledger_cost(&la), Pricing::default().cost(t.input_tokens, t.output_tokens));
        let mut merged = la.clone();
        merged.merge(&lb);
        prop_assert_eq!(ledger_cost(&merged), ledger_cost(&la) + ledger_cost(&lb));
        prop_assert_eq!(merged.totals().calls, (a.len() + b.len()) as u64);
    }

    #[test]
    fn verification_loop_is_bounded(max in 0u32..8, accept_at in prop::option::of(1u32..10)) {
        let mut calls = 0u32;
        let outcome = verification_loop(
            |fb| {
                calls += 1;
                assert_eq!(fb.len() as u32, calls - 1);
                Ok(calls)
            },
            |n| if Some(*n) == accept_at { Ok(()) } else { Err(format!("attempt {n} rejected")) },
            max,
        );
        prop_assert!(calls <= max);
        match (accept_at, outcome) {
            (Some(k), LoopOutcome::Verified { value, transcript, calls: c }) => {
                prop_assert!(k <= max);
                prop_assert_eq!((value, c, transcript.len() as u32), (k, k, k - 1));
            }
            (_, LoopOutcome::Exhausted { transcript }) => {
                prop_assert!(accept_at.is_none_or(|k| k > max));
                prop_assert_eq!(transcript.len() as u32, max);
                prop_assert_eq!(calls, max);
            }
            (None, LoopOutcome::Verified { .. }) => prop_assert!(false, "verified without an accepting attempt"),
        }
    }
}
