use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use robsur::exp1::{gen_exp1, Exp1Config, GapRow};
use robsur::io::{read_gap_table, read_instance, write_gap_table, write_instance, InstanceJson};
use robsur_core::gen::{random_convex_instance, random_theta_ellipsoid};
use robsur_core::qcqp::{QcqpInstance, QuadConstraint};

fn mixed_instance() -> QcqpInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let base = random_convex_instance(&mut rng, 3, 3);
    let cons = base.constraints();
    let theta = random_theta_ellipsoid(&mut rng, cons[1].nominal(), 2, 0.2);
    QcqpInstance::new(
        base.objective_matrix().clone(),
        base.c().clone(),
        base.q(),
        vec![
            QuadConstraint::frobenius_ball(cons[0].a.clone(), cons[0].b.clone(), cons[0].gamma, 0.5),
            QuadConstraint::from_theta_ellipsoid(theta),
            cons[2].clone(),
        ],
    )
    .unwrap()
}

#[test]
fn instance_files_round_trip_every_set_kind() {
    let dir = tempfile::tempdir().unwrap();
    let mut instances = vec![mixed_instance()];
    instances.extend(gen_exp1(&Exp1Config { sizes: vec![4], ..Exp1Config::default() }).unwrap().into_iter().map(|(_, i)| i));
    for (k, inst) in instances.iter().enumerate() {
        let path = dir.path().join(format!("inst{k}.json"));
        write_instance(&path, inst).unwrap();
        assert_eq!(&read_instance(&path).unwrap(), inst);
    }
}

#[test]
fn instance_json_uses_the_documented_field_names() {
    let value = serde_json::to_value(InstanceJson::from_instance(&mixed_instance())).unwrap();
    for key in ["n_vars", "Q", "c", "q", "constraints"] {
        assert!(value.get(key).is_some(), "missing {key}");
    }
    let con = &value["constraints"][0];
    for key in ["A", "b", "gamma", "uncertainty"] {
        assert!(con.get(key).is_some(), "missing {key}");
    }
    assert_eq!(con["uncertainty"]["kind"], "frobenius_ball");
    assert_eq!(value["constraints"][1]["uncertainty"]["kind"], "theta_ellipsoid");
    assert_eq!(value["constraints"][2]["uncertainty"]["kind"], "none");
}

#[test]
fn invalid_instance_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    // Q is not PSD
    std::fs::write(&path, r#"{"n_vars":1,"Q":[[-1]],"c":[0],"q":0,"constraints":[]}"#).unwrap();
    assert_eq!(read_instance(&path).unwrap_err().exit_code(), 2);
    std::fs::write(&path, r#"{"n_vars":2,"Q":[[1,0],[0]],"c":[0,0],"q":0,"constraints":[]}"#).unwrap();
    assert!(read_instance(&path).is_err());
    std::fs::write(&path, r#"{"n_vars":1,"Q":[[1]],"c":[0],"q":0,"constraints":[],"extra":1}"#).unwrap();
    assert!(read_instance(&path).is_err());
}

#[test]
fn gap_table_round_trip() {
    let rows = vec![
        GapRow { size: 10, rc_opt: -0.1949, sur_opt: -0.1816, rel_gap: 0.0683 },
        GapRow { size: 20, rc_opt: -0.5704, sur_opt: -0.5402, rel_gap: 0.0529 },
    ];
    let mut buf = Vec::new();
    write_gap_table(&mut buf, &rows).unwrap();
    assert!(String::from_utf8(buf.clone()).unwrap().starts_with("size,rc_opt,sur_opt,rel_gap\n"));
    assert_eq!(read_gap_table(buf.as_slice()).unwrap(), rows);
}
