use std::collections::BTreeMap;

use consentchain::crypto::{Address, NodeIdentity};
use consentchain::ledger::{create_chain, ChainParams, ChainState, Payload, Transaction};
use consentchain::permissions::{
    apply_grant, authorize_tx, Denied, GrantDirection, GrantPayload, Permission, PermissionSet,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn id(tag: &str) -> NodeIdentity {
    NodeIdentity::generate(Some(tag.as_bytes()))
}

/// Genesis state where `signer` holds exactly `flags`, with one open and one
/// restricted stream created by the founder.
fn state_with(founder: &NodeIdentity, signer: &Address, flags: PermissionSet) -> ChainState {
    let mut state = ChainState::genesis(&ChainParams::default(), founder.address(), 0);
    let mut nonce = 0;
    let mut push = |state: &mut ChainState, payload| {
        nonce += 1;
        let tx = Transaction::new_signed(founder, nonce, payload);
        state.apply_tx(&tx, 1).unwrap();
    };
    if !flags.is_empty() {
        push(&mut state, Payload::Grant(GrantPayload::flags(signer.clone(), flags)));
    }
    push(&mut state, Payload::StreamCreate { name: "open".into(), open: true });
    push(&mut state, Payload::StreamCreate { name: "closed".into(), open: false });
    state
}

fn first_in_order(set: PermissionSet) -> Permission {
    *Permission::ALL.iter().find(|p| set.contains(**p)).unwrap()
}

/// Written straight from the rule table, independently of the library.
fn oracle(signer: u8, payload: &Payload) -> Result<(), Denied> {
    let has = |p: Permission| signer & (1 << p as u8) != 0;
    match payload {
        Payload::StreamCreate { .. } => {
            if has(Permission::Create) {
                Ok(())
            } else {
                Err(Denied::Missing(Permission::Create))
            }
        }
        Payload::StreamPublish { stream, .. } => {
            if !has(Permission::Send) {
                Err(Denied::Missing(Permission::Send))
            } else if stream == "open" {
                Ok(())
            } else {
                Err(Denied::NotStreamWriter(stream.clone()))
            }
        }
        Payload::Grant(g) | Payload::Revoke(g) => {
            let touched = match &g.scope {
                consentchain::permissions::GrantScope::Flags(f) => f.bits(),
                _ => unreachable!(),
            };
            if touched == 0 || has(Permission::Admin) {
                return Ok(());
            }
            let allowed = if has(Permission::Activate) { 0b111 } else { 0 };
            let bad = touched & !allowed;
            if bad == 0 {
                Ok(())
            } else {
                Err(Denied::NotAuthorized(first_in_order(PermissionSet::from_bits(bad))))
            }
        }
    }
}

#[test]
fn authorize_matches_rule_table_for_every_flag_subset() {
    let founder = id("founder");
    let signer = id("signer");
    let target = id("target").address().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    for bits in 0..=255u8 {
        let state = state_with(&founder, signer.address(), PermissionSet::from_bits(bits));
        let mut payloads = vec![
            Payload::StreamCreate { name: "new".into(), open: rng.gen() },
            Payload::StreamPublish { stream: "open".into(), key: None, data: vec![1] },
            Payload::StreamPublish { stream: "closed".into(), key: None, data: vec![2] },
        ];
        for _ in 0..6 {
            let f = PermissionSet::from_bits(rng.gen());
            payloads.push(Payload::Grant(GrantPayload::flags(target.clone(), f)));
            let f = PermissionSet::from_bits(rng.gen());
            payloads.push(Payload::Revoke(GrantPayload::flags(target.clone(), f)));
        }
        for payload in payloads {
            let expected = oracle(bits, &payload);
            let tx = Transaction::new_signed(&signer, 1, payload);
            assert_eq!(authorize_tx(&state, &tx), expected, "signer flags {bits:#010b}");
            checked += 1;
        }
    }
    assert_eq!(checked, 256 * 15);
}

#[test]
fn last_admin_cannot_revoke_itself() {
    let founder = id("founder");
    let state = ChainState::genesis(&ChainParams::default(), founder.address(), 0);
    let tx = Transaction::new_signed(
        &founder,
        1,
        Payload::Revoke(GrantPayload::flags(founder.address().clone(), [Permission::Admin])),
    );
    assert_eq!(authorize_tx(&state, &tx), Err(Denied::LastAdmin));
}

#[test]
fn sequential_grants_match_a_bitmask_model() {
    let founder = id("founder");
    let others: Vec<NodeIdentity> = (0..6).map(|i| id(&format!("member-{i}"))).collect();
    let mut chain = create_chain(ChainParams::default(), &founder, 0).unwrap();
    let mut model: BTreeMap<Address, u8> = BTreeMap::new();
    model.insert(founder.address().clone(), 0xff);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut nonce = 0;
    for block in 0..10u64 {
        let mut txs = Vec::new();
        for _ in 0..10 {
            let who = others[rng.gen_range(0..others.len())].address().clone();
            // Members never mine, so the founder keeps every turn.
            let flags: u8 = rng.gen::<u8>() & !(1 << Permission::Mine as u8);
            let grant = rng.gen_bool(0.6);
            let payload = GrantPayload::flags(who.clone(), PermissionSet::from_bits(flags));
            nonce += 1;
            txs.push(Transaction::new_signed(
                &founder,
                nonce,
                if grant { Payload::Grant(payload) } else { Payload::Revoke(payload) },
            ));
            let e = model.entry(who).or_default();
            *e = if grant { *e | flags } else { *e & !flags };
        }
        chain.append_block(txs, &founder, 1_000 * (block + 1)).unwrap();
        let perms = chain.state().permissions();
        for o in &others {
            let want = model.get(o.address()).copied().unwrap_or(0);
            assert_eq!(perms.explicit(o.address()).bits(), want, "after block {block}");
        }
    }
    assert_eq!(chain.height(), 10);
}

#[test]
fn revocation_takes_effect_at_the_next_block() {
    let founder = id("founder");
    let member = id("member");
    let mut chain = create_chain(ChainParams::default(), &founder, 0).unwrap();
    let grant = Transaction::new_signed(
        &founder,
        1,
        Payload::Grant(GrantPayload::flags(member.address().clone(), [Permission::Send, Permission::Create])),
    );
    chain.append_block(vec![grant], &founder, 1_000).unwrap();
    let create = Transaction::new_signed(&member, 1, Payload::StreamCreate { name: "s".into(), open: true });
    assert_eq!(authorize_tx(chain.state(), &create), Ok(()));
    let revoke = Transaction::new_signed(
        &founder,
        2,
        Payload::Revoke(GrantPayload::flags(member.address().clone(), [Permission::Create])),
    );
    chain.append_block(vec![revoke], &founder, 2_000).unwrap();
    assert!(!chain.state().permissions().check_permission(member.address(), Permission::Create));
    assert_eq!(authorize_tx(chain.state(), &create), Err(Denied::Missing(Permission::Create)));
    assert!(chain.append_block(vec![create], &founder, 3_000).is_err());
}

fn arb_set() -> impl Strategy<Value = PermissionSet> {
    any::<u8>().prop_map(PermissionSet::from_bits)
}

proptest! {
    #[test]
    fn grant_is_idempotent(flags in arb_set(), initial in arb_set()) {
        let founder = id("founder");
        let target = id("target").address().clone();
        let state = state_with(&founder, &target, initial);
        let perms = state.permissions();
        let once = apply_grant(perms, founder.address(), GrantDirection::Grant, &target, flags).unwrap();
        let twice = apply_grant(&once, founder.address(), GrantDirection::Grant, &target, flags).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn admin_is_at_least_as_authorized_as_activate(bits in any::<u8>(), touched in arb_set(), grant in any::<bool>()) {
        let founder = id("founder");
        let signer = id("signer");
        let target = id("target").address().clone();
        let base = PermissionSet::from_bits(bits).with(Permission::Activate);
        let payload = GrantPayload::flags(target, touched);
        let payload = if grant { Payload::Grant(payload) } else { Payload::Revoke(payload) };
        let tx = Transaction::new_signed(&signer, 1, payload);
        let weak = state_with(&founder, signer.address(), base);
        let strong = state_with(&founder, signer.address(), base.with(Permission::Admin));
        if authorize_tx(&weak, &tx).is_ok() {
            prop_assert!(authorize_tx(&strong, &tx).is_ok());
        }
    }

    #[test]
    fn replaying_a_sequence_is_deterministic(ops in proptest::collection::vec((0usize..4, any::<u8>(), any::<bool>()), 0..30)) {
        let founder = id("founder");
        let targets: Vec<Address> = (0..4).map(|i| id(&format!("t{i}")).address().clone()).collect();
        let run = || {
            let mut perms = ChainState::genesis(&ChainParams::default(), founder.address(), 0).permissions().clone();
            for (who, flags, grant) in &ops {
                let dir = if *grant { GrantDirection::Grant } else { GrantDirection::Revoke };
                if let Ok(next) = apply_grant(&perms, founder.address(), dir, &targets[*who], PermissionSet::from_bits(*flags)) {
                    perms = next;
                }
            }
            perms
        };
        prop_assert_eq!(run(), run());
    }
}
