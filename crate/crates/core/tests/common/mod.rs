#![allow(dead_code)]

use consentchain::crypto::NodeIdentity;
use consentchain::ledger::ChainParams;
use consentchain::permissions::{Permission, PermissionSet};
use consentchain::Consortium;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn identity(tag: &str) -> NodeIdentity {
    NodeIdentity::generate(Some(tag.as_bytes()))
}

/// A consortium that has run `blocks` rounds of random grants, revokes,
/// stream creations and publishes. Some members are made miners, so the
/// producer rotates.
pub fn random_workload(seed: u64, blocks: usize) -> Consortium {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let founder = identity(&format!("workload-{seed}-founder"));
    let mut c = Consortium::create(ChainParams::default(), "n0", founder, 1_000).unwrap();
    let members = rng.gen_range(2..5);
    let mut labels = vec!["n0".to_owned()];
    for i in 1..=members {
        let id = identity(&format!("workload-{seed}-member-{i}"));
        let addr = id.address().clone();
        let label = format!("n{i}");
        c.add_node(&label, id).unwrap();
        let mut flags = PermissionSet::from([Permission::Connect, Permission::Send, Permission::Receive]);
        if rng.gen_bool(0.5) {
            flags.insert(Permission::Create);
        }
        if rng.gen_bool(0.3) {
            flags.insert(Permission::Mine);
        }
        c.node_mut("n0").unwrap().grant(&addr, flags).unwrap();
        labels.push(label);
    }
    c.seal().unwrap();

    let grantable = [Permission::Send, Permission::Receive, Permission::Create, Permission::Issue, Permission::Mine];
    for b in 0..blocks {
        for _ in 0..rng.gen_range(1..6) {
            let label = labels.choose(&mut rng).unwrap().clone();
            match rng.gen_range(0..5) {
                0 => {
                    let open = rng.gen_bool(0.7);
                    let _ = c.node_mut(&label).unwrap().create_stream(&format!("s-{b}-{label}"), open);
                }
                1 | 2 | 3 => {
                    let streams: Vec<String> = c
                        .founder()
                        .chain()
                        .state()
                        .streams()
                        .map(|s| s.name.clone())
                        .collect();
                    let stream = streams.choose(&mut rng).unwrap().clone();
                    let key = format!("k{}", rng.gen_range(0..4));
                    let data: Vec<u8> = (0..rng.gen_range(0..48)).map(|_| rng.gen()).collect();
                    let _ = c.node_mut(&label).unwrap().publish(&stream, Some(&key), data);
                }
                _ => {
                    let target_label = labels[1..].choose(&mut rng).unwrap().clone();
                    let target = c.node(&target_label).unwrap().address().clone();
                    let flag = *grantable.choose(&mut rng).unwrap();
                    let founder = c.node_mut("n0").unwrap();
                    let _ = if rng.gen_bool(0.6) {
                        founder.grant(&target, PermissionSet::from([flag]))
                    } else {
                        founder.revoke(&target, PermissionSet::from([flag]))
                    };
                }
            }
        }
        c.seal().unwrap();
    }
    c
}

/// Founder `labels[0]` plus members holding connect, send and receive;
/// the sharing streams exist, every node has announced its key and
/// subscribed to `items` and `access`.
pub fn sharing_consortium(labels: &[&str]) -> Consortium {
    use consentchain::sharing::announce_pubkey;
    use consentchain::streams::{ACCESS_STREAM, ITEMS_STREAM};

    let mut c = Consortium::create(ChainParams::default(), labels[0], identity(labels[0]), 1_000).unwrap();
    c.bootstrap_sharing().unwrap();
    let flags = PermissionSet::from([Permission::Connect, Permission::Send, Permission::Receive]);
    for label in &labels[1..] {
        let id = identity(label);
        let addr = id.address().clone();
        c.add_node(label, id).unwrap();
        c.node_mut(labels[0]).unwrap().grant(&addr, flags).unwrap();
    }
    c.seal().unwrap();
    for label in labels {
        let n = c.node_mut(label).unwrap();
        announce_pubkey(n).unwrap();
        n.subscribe(ITEMS_STREAM).unwrap();
        n.subscribe(ACCESS_STREAM).unwrap();
    }
    c.seal().unwrap();
    c
}

/// An open-data profile document for `user_id` with every field set.
pub fn profile_document(user_id: &str, name: &str) -> Vec<u8> {
    serde_json::to_vec(&serde_json::json!({
        "format": consentchain::enterprise::FORMAT_TAG,
        "user_id": user_id,
        "name": name,
        "nationality": "Canadian",
        "contact_number": "+1 306-555-0100",
        "purpose_of_visit": "Conference",
        "stay_from": "2019-06-01",
        "stay_to": "2019-06-05",
    }))
    .unwrap()
}
