// Scratch harness: chain vs DES at several arrival rates.
use chargenet::model::SwapStationSpec;
use chargenet::queues::{swap_chain_build, swap_wait};
use chargenet::simcheck::des_swap;

fn main() {
    let spec = SwapStationSpec {
        bays: 1,
        chargers: 10,
        batteries: 10,
        queue_capacity: 100,
        swap_hours: 1.0 / 12.0,
    };
    for lambda in [2.0, 8.0, 10.0, 12.0, 20.0, 30.0] {
        let chain = swap_chain_build(lambda, &spec, 1.0).unwrap();
        let mq = swap_wait(&chain).unwrap();
        let des = des_swap(lambda, &spec, 1.0, 400_000, 11).unwrap();
        println!(
            "lambda {lambda:6.2}  chain wait {:8.4} block {:7.5}   des wait {:8.4} block {:7.5}  rel {:6.3}",
            mq.wait,
            mq.block,
            des.mean_wait,
            des.block_rate,
            (des.mean_wait - mq.wait) / mq.wait.max(1e-9)
        );
    }
}
