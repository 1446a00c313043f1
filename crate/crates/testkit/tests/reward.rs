use streamrc_testkit::reward::check_reward_contract;

#[test]
fn reward_contract_holds_for_random_sequences() {
    let made = check_reward_contract(10_000, 77).unwrap();
    assert!(made >= 10_000);
}
