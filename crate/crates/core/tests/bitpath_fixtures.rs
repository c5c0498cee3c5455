mod common;

use lsysbench::astgen::{assign_path_bits, extract_functions};
use lsysbench::grammar::parse_seq;

#[test]
fn hand_executed_tables_match() {
    let fixtures = common::bit_fixtures();
    assert_eq!(fixtures.len(), 2);
    for fx in fixtures {
        let mut p = extract_functions(&parse_seq(&fx.program).unwrap()).unwrap();
        let report = assign_path_bits(&mut p.functions[0]);
        let mut bits = Vec::new();
        common::source_order_bits(&p.functions[0].body, &mut bits);
        assert_eq!(bits, fx.expect, "{}", fx.name);
        assert_eq!(report.max_bit_index, fx.max, "{}", fx.name);
        assert_eq!(p.functions[0].max_bit_index, fx.max, "{}", fx.name);
        assert_eq!(report.wrapped, 0);
    }
}
