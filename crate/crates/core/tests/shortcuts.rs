use amp2_core::shortcut::{apply_shortcut, merge, Bundle, Combine, ShortcutKind, ShortcutType};
use amp2_core::{Error, Tape, Tensor, Var};
use proptest::prelude::*;

fn constant(tape: &mut Tape, data: &[f64]) -> Var {
    tape.constant(Tensor::vector(data.to_vec()))
}

fn full_bundle(tape: &mut Tape, f: &[f64], s: &[f64], m: &[f64]) -> Bundle {
    Bundle {
        features: Some(constant(tape, f)),
        spikes: Some(constant(tape, s)),
        mp1: Some(constant(tape, m)),
    }
}

fn spikes(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop::bool::ANY.prop_map(|b| if b { 1.0 } else { 0.0 }), len)
}

proptest! {
    #[test]
    fn each_kind_adds_its_operands(
        f_in in prop::collection::vec(-2.0f64..2.0, 4),
        m_in in prop::collection::vec(-2.0f64..2.0, 4),
        s_in in spikes(4),
        f_out in prop::collection::vec(-2.0f64..2.0, 4),
        s_out in spikes(4),
    ) {
        let mut tape = Tape::new();
        let skip = full_bundle(&mut tape, &f_in, &s_in, &m_in);
        let out = full_bundle(&mut tape, &f_out, &s_out, &[0.0; 4]);
        let cases = [
            (ShortcutType::Vanilla, &s_out, &f_in),
            (ShortcutType::Sew, &s_out, &s_in),
            (ShortcutType::Membrane, &f_out, &f_in),
            (ShortcutType::Rmp, &f_out, &m_in),
        ];
        for (kind, main, side) in cases {
            let v = merge(&mut tape, ShortcutKind::new(kind), &skip, &out).unwrap();
            let got = tape.value(v).unwrap().data().to_vec();
            for i in 0..4 {
                prop_assert_eq!(got[i], main[i] + side[i]);
            }
        }
    }

    #[test]
    fn sew_and_is_logical_and(a in spikes(6), b in spikes(6)) {
        let mut tape = Tape::new();
        let skip = Bundle { spikes: Some(constant(&mut tape, &a)), ..Default::default() };
        let out = Bundle { spikes: Some(constant(&mut tape, &b)), ..Default::default() };
        let kind = ShortcutKind { kind: ShortcutType::Sew, combine: Combine::And };
        let v = merge(&mut tape, kind, &skip, &out).unwrap();
        for (i, &g) in tape.value(v).unwrap().data().iter().enumerate() {
            let want = (a[i] == 1.0 && b[i] == 1.0) as u8 as f64;
            prop_assert_eq!(g, want);
        }
    }
}

#[test]
fn and_combine_is_only_valid_for_sew() {
    for kind in [ShortcutType::Vanilla, ShortcutType::Membrane, ShortcutType::Rmp] {
        let k = ShortcutKind { kind, combine: Combine::And };
        assert!(k.validate().is_err());
    }
}

#[test]
fn missing_operand_names_the_field() {
    let mut tape = Tape::new();
    let skip = Bundle::default();
    let f = constant(&mut tape, &[1.0]);
    let out = Bundle { features: Some(f), ..Default::default() };
    let err = merge(&mut tape, ShortcutKind::rmp(), &skip, &out).unwrap_err();
    assert!(matches!(err, Error::MissingBundleField { kind: "RMP", field: "mp1" }), "{err:?}");
}

#[test]
fn rmp_gradient_flows_to_both_paths() {
    let mut tape = Tape::new();
    let mp1 = tape.leaf(Tensor::vector(vec![0.3, -0.2]));
    let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
    let input = Bundle { mp1: Some(mp1), ..Default::default() };
    let merged = apply_shortcut(&mut tape, ShortcutKind::rmp(), &input, |tape, _| {
        let f = tape.scale(x, 3.0)?;
        Ok(Bundle { features: Some(f), ..Default::default() })
    })
    .unwrap();
    let s = tape.sum(merged).unwrap();
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(mp1).unwrap().unwrap(), &[1.0, 1.0]);
    assert_eq!(tape.grad(x).unwrap().unwrap(), &[3.0, 3.0]);
}

#[test]
fn shape_mismatch_is_reported() {
    let mut tape = Tape::new();
    let skip = Bundle { features: Some(constant(&mut tape, &[1.0, 2.0])), ..Default::default() };
    let out = Bundle { features: Some(constant(&mut tape, &[1.0])), ..Default::default() };
    assert!(merge(&mut tape, ShortcutKind::new(ShortcutType::Membrane), &skip, &out).is_err());
}
