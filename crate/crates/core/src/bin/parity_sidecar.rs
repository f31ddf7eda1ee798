//! Minimal sidecar speaking the loss protocol over stdio or TCP.
//!
//! Every loss it reports is the mean squared error against the registered
//! target: in parity mode as the total, otherwise as the geometric term with
//! a zero semantic term. The relevancy map is uniform. It exists to exercise
//! clients end to end without any neural network.

use std::collections::HashMap;
use std::io::{BufReader, BufWriter};
use std::net::TcpListener;

use strokeopt::loss::pixel_l2;
use strokeopt::protocol::{serve, EvalFlags, LossReply, Message, ServeEnd, WireImage};
use strokeopt::{Error, Result};

#[derive(Default)]
struct State {
    targets: HashMap<u32, WireImage>,
}

impl State {
    fn handle(&mut self, request: Message) -> Result<Message> {
        match request {
            Message::RegisterTarget(image) => {
                image.to_raster()?;
                let id = self.targets.len() as u32;
                let relevancy = vec![1.0; image.width as usize * image.height as usize];
                self.targets.insert(id, image);
                Ok(Message::TargetRegistered { target_id: id, relevancy })
            }
            Message::EvalLoss(req) => {
                let target = self
                    .targets
                    .get(&req.target_id)
                    .ok_or_else(|| Error::Protocol(format!("unknown target {}", req.target_id)))?;
                let report = pixel_l2(&req.image.to_raster()?, &target.to_raster()?)?;
                let grad = report.pixel_grad.data().iter().map(|&g| g as f32).collect();
                let mse = report.total;
                let reply = if req.flags.contains(EvalFlags::L2_PARITY) {
                    LossReply { total: mse, semantic: 0.0, geometric: mse, grad }
                } else {
                    let geometric = if req.flags.contains(EvalFlags::GEOMETRIC) { mse } else { 0.0 };
                    let grad = if req.flags.contains(EvalFlags::GEOMETRIC) {
                        grad
                    } else {
                        vec![0.0; req.image.value_count()]
                    };
                    LossReply { total: geometric, semantic: 0.0, geometric, grad }
                };
                Ok(Message::Loss(reply))
            }
            other => Err(Error::Protocol(format!("unexpected request type {}", other.msg_type()))),
        }
    }
}

fn main() -> std::process::ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let result = match args.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        [] | ["--stdio"] => {
            let mut state = State::default();
            let stdin = std::io::stdin();
            let stdout = std::io::stdout();
            serve(&mut BufReader::new(stdin.lock()), &mut BufWriter::new(stdout.lock()), |m| state.handle(m))
        }
        ["--listen", addr] => TcpListener::bind(addr).map_err(Error::Io).and_then(|listener| {
            let (stream, _) = listener.accept()?;
            let mut state = State::default();
            let mut reader = BufReader::new(stream.try_clone()?);
            serve(&mut reader, &mut BufWriter::new(stream), |m| state.handle(m))
        }),
        _ => {
            eprintln!("usage: strokeopt-parity-sidecar [--stdio | --listen HOST:PORT]");
            return std::process::ExitCode::from(2);
        }
    };
    match result {
        Ok(end) => {
            if end == ServeEnd::Shutdown {
                eprintln!("sidecar: shutdown requested, exiting");
            }
            std::process::ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("sidecar: {e}");
            std::process::ExitCode::FAILURE
        }
    }
}
