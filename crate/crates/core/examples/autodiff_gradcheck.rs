//! Build a small objective on the tape, take analytic gradients, compare
//! them with central differences and take a few Adam steps.

use kgzsl::autodiff::{grad_check, objective, seeded_rng, Adam, AdamConfig, Binder, GradCheckConfig, ParamStore, Tape};

fn main() -> kgzsl::Result<()> {
    let mut rng = seeded_rng(0);
    let mut store = ParamStore::new();
    store.glorot("w", 3, 4, &mut rng);
    store.zeros("b", &[3]);

    let x = [0.5, -1.0, 2.0, 0.25];
    let loss = objective(move |b: &Binder| {
        let h = b.param("w")?.matmul(b.vector(&x))?.add(b.param("b")?)?.tanh();
        h.cross_entropy(1)
    });

    let report = grad_check(&loss, &store, &GradCheckConfig::default())?;
    for p in &report.params {
        println!("{:>2}: max rel error {:.2e}", p.name, p.max_rel_error);
    }
    println!("passed: {}", report.passed);

    let mut adam = Adam::new(AdamConfig::default());
    for step in 0..5 {
        let tape = Tape::new();
        let b = Binder::new(&tape, &store);
        let l = loss(&b)?;
        let grads = b.backward(l)?;
        println!("step {step}: loss {:.5}", l.item());
        drop(b);
        adam.step(&mut store, &grads);
    }
    Ok(())
}
