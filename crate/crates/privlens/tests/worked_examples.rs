use privlens_testkit::worked;

macro_rules! cases {
    ($($name:ident),* $(,)?) => {
        $(
            #[test]
            fn $name() {
                worked::$name();
            }
        )*
    };
}

cases!(
    key_guessing_then_decryption,
    own_kb_element_is_a_leaf,
    content_analysis_via_rebuilt_hash,
    client_associability_classes,
    association_without_the_key,
    views_on_alice_and_bob,
    post_trace_knowledge_bases,
    first_message_witness,
    reply_witness,
    identifier_undetermined_before_first_step,
    lookup_requirements,
);

#[test]
fn case_list_is_complete() {
    assert_eq!(worked::CASES.len(), 11);
}
