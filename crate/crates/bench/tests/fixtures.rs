use variance_forge_bench::fresh_evaluator;

#[test]
fn fresh_evaluators_start_cold_and_agree() {
    let a = fresh_evaluator().unwrap();
    let b = fresh_evaluator().unwrap();
    assert_eq!(a.computed(), 0);
    let ps = a.pool().strategy_at(13);
    assert_eq!(a.evaluate(&ps).unwrap().pv, b.evaluate(&ps).unwrap().pv);
}
