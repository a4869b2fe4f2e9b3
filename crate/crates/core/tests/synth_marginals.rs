use maskpar_core::data::synth::SynthGrammar;
use maskpar_core::data::{synth_generate, SynthSpec};

#[test]
fn marginals_follow_the_grammar() {
    let grammar =
        SynthGrammar { figure: [0.2, 0.5, 0.3], hat: 0.4, torso: [0.5, 0.3, 0.2], light_legs: 0.6, arm_raised: 0.3 };
    let spec = SynthSpec { grammar: grammar.clone(), ..SynthSpec::new(1000, 0.5, 0.2, 21) };
    let data = synth_generate(&spec).unwrap();
    let freq = |i: usize| data.iter().filter(|s| s.labels[i] == 1).count() as f64 / 1000.0;
    let expected = [
        grammar.figure[0],
        grammar.figure[1],
        grammar.figure[2],
        grammar.hat,
        grammar.torso[0],
        grammar.torso[1],
        grammar.torso[2],
        1.0 - grammar.light_legs,
        grammar.light_legs,
        grammar.arm_raised,
    ];
    for (i, &e) in expected.iter().enumerate() {
        assert!((freq(i) - e).abs() <= 0.03, "attribute {i}: {} vs {e}", freq(i));
    }
    // exactly one class per single-choice category
    for s in &data {
        assert_eq!(s.labels[0..3].iter().sum::<u8>(), 1);
        assert_eq!(s.labels[4..7].iter().sum::<u8>(), 1);
        assert_eq!(s.labels[7] + s.labels[8], 1);
    }
}

/// Forces one grammar choice at a time; every alternative must render
/// differently from the same random stream.
#[test]
fn each_attribute_value_renders_differently() {
    let render = |g: SynthGrammar| synth_generate(&SynthSpec { grammar: g, ..SynthSpec::new(3, 0.0, 0.0, 5) }).unwrap();
    let base =
        SynthGrammar { figure: [0.0, 1.0, 0.0], hat: 0.0, torso: [1.0, 0.0, 0.0], light_legs: 0.0, arm_raised: 0.0 };
    let reference = render(base.clone());
    let variants = [
        SynthGrammar { figure: [1.0, 0.0, 0.0], ..base.clone() },
        SynthGrammar { figure: [0.0, 0.0, 1.0], ..base.clone() },
        SynthGrammar { hat: 1.0, ..base.clone() },
        SynthGrammar { torso: [0.0, 1.0, 0.0], ..base.clone() },
        SynthGrammar { torso: [0.0, 0.0, 1.0], ..base.clone() },
        SynthGrammar { light_legs: 1.0, ..base.clone() },
        SynthGrammar { arm_raised: 1.0, ..base.clone() },
    ];
    for (k, v) in variants.into_iter().enumerate() {
        let other = render(v);
        for (a, b) in reference.iter().zip(&other) {
            assert_ne!(a.labels, b.labels, "variant {k}");
            assert_ne!(a.image, b.image, "variant {k}");
        }
    }
}

#[test]
fn same_spec_same_bytes() {
    let spec = SynthSpec::new(20, 0.8, 0.3, 9);
    let a = synth_generate(&spec).unwrap();
    let b = synth_generate(&spec).unwrap();
    assert!(a.iter().zip(&b).all(|(x, y)| x.image.data.iter().map(|v| v.to_bits()).eq(y
        .image
        .data
        .iter()
        .map(|v| v.to_bits()))));
    assert_eq!(a, b);
}
