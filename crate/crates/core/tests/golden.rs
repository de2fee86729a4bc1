use std::collections::BTreeMap;

use chaoscycle::compiler::{
    compile, emit_workflow, normalize_manifest, patch_workflow, structural_diff, tree_from_manifest, CompileOptions,
    WorkflowNode,
};
use chaoscycle::reference::{
    nginx_hypothesis, nginx_meta, nginx_plan, nginx_plan_with, sockshop_hypothesis, sockshop_meta, sockshop_plan,
};

const NGINX: &str = include_str!("fixtures/golden/nginx_workflow.yaml");
const SOCKSHOP: &str = include_str!("fixtures/golden/sockshop_workflow.yaml");

fn nginx_tree() -> WorkflowNode {
    compile(&nginx_plan(), &nginx_hypothesis(), &CompileOptions::default()).unwrap()
}

fn diff(a: &str, b: &str) -> Vec<String> {
    structural_diff(&normalize_manifest(a).unwrap(), &normalize_manifest(b).unwrap())
}

#[test]
fn nginx_matches_golden() {
    let out = emit_workflow(&nginx_tree(), &nginx_meta()).unwrap();
    assert_eq!(diff(&out, NGINX), Vec::<String>::new());
}

#[test]
fn sockshop_matches_golden() {
    let tree = compile(&sockshop_plan(), &sockshop_hypothesis(), &CompileOptions::default()).unwrap();
    let out = emit_workflow(&tree, &sockshop_meta()).unwrap();
    assert_eq!(diff(&out, SOCKSHOP), Vec::<String>::new());
}

#[test]
fn eight_second_post_grace_shifts_entry_deadline() {
    let tree = compile(&nginx_plan_with(8), &nginx_hypothesis(), &CompileOptions::default()).unwrap();
    assert_eq!(tree.deadline.to_string(), "30m53s");
    let out = emit_workflow(&tree, &nginx_meta()).unwrap();
    let d = diff(&out, NGINX);
    assert!(
        d.iter().any(|p| p.contains("post-validation-suspend2/deadline")),
        "{d:?}"
    );
}

#[test]
fn parsed_golden_tree_has_same_shapes() {
    for (golden, tree) in [
        (NGINX, nginx_tree()),
        (
            SOCKSHOP,
            compile(&sockshop_plan(), &sockshop_hypothesis(), &CompileOptions::default()).unwrap(),
        ),
    ] {
        assert_eq!(tree_from_manifest(golden).unwrap().shapes(), tree.shapes());
    }
}

#[test]
fn identity_patch_is_stable() {
    let out = emit_workflow(&nginx_tree(), &nginx_meta()).unwrap();
    let patched = patch_workflow(&out, &BTreeMap::new(), &BTreeMap::new()).unwrap();
    assert!(diff(&out, &patched).is_empty());
    let again = patch_workflow(&patched, &BTreeMap::new(), &BTreeMap::new()).unwrap();
    assert_eq!(patched, again);
}
