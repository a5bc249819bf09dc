use std::collections::BTreeMap;

use proptest::prelude::*;
use qtp_cli::RawConfig;

type Sections = BTreeMap<String, BTreeMap<String, String>>;

fn sections() -> impl Strategy<Value = Sections> {
    let value = "[a-z0-9][a-z0-9.,_ -]{0,10}[a-z0-9]";
    prop::collection::btree_map("[a-z][a-z0-9_]{0,6}", prop::collection::btree_map("[a-z][a-z0-9_]{0,6}", value, 1..5), 1..4)
}

fn render(s: &Sections, reverse: bool, noise: bool) -> String {
    let mut out = String::new();
    let mut secs: Vec<_> = s.iter().collect();
    if reverse {
        secs.reverse();
    }
    for (name, keys) in secs {
        if noise {
            out.push_str("# section\n\n");
        }
        out.push_str(&format!("[{name}]\n"));
        let mut keys: Vec<_> = keys.iter().collect();
        if reverse {
            keys.reverse();
        }
        for (k, v) in keys {
            if noise {
                out.push_str(&format!("  {k}   =\t{v}   # trailing\n"));
            } else {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
    }
    out
}

proptest! {
    #[test]
    fn canonical_form_ignores_order_comments_and_spacing(s in sections()) {
        let plain = RawConfig::parse(&render(&s, false, false)).unwrap();
        let shuffled = RawConfig::parse(&render(&s, true, true)).unwrap();
        prop_assert_eq!(plain.canonical(), shuffled.canonical());
        for (sec, keys) in &s {
            for (k, v) in keys {
                prop_assert_eq!(shuffled.get(sec, k), Some(v.trim()));
            }
        }
    }

    #[test]
    fn any_value_change_changes_the_canonical_form(s in sections(), pick in any::<prop::sample::Index>()) {
        let base = RawConfig::parse(&render(&s, false, false)).unwrap();
        let flat: Vec<(&String, &String)> = s.iter().flat_map(|(sec, k)| k.keys().map(move |key| (sec, key))).collect();
        let (sec, key) = flat[pick.index(flat.len())];
        let mut edited = base.clone();
        edited.set(sec, key, format!("{}x", base.get(sec, key).unwrap()));
        prop_assert_ne!(base.canonical(), edited.canonical());
    }

    #[test]
    fn parsing_arbitrary_text_never_panics(text in "(\\PC|\n|=|\\[|\\]|#){0,200}") {
        let _ = RawConfig::parse(&text);
    }
}
