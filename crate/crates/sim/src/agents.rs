use std::io::{ErrorKind, Write};
use std::net::{Ipv4Addr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use rand::Rng;

use crate::scenario::Action;
use crate::world::SharedWorld;
use crate::SimError;

const POLL: Duration = Duration::from_millis(10);

fn bind(port: u16) -> std::io::Result<TcpListener> {
    let l = TcpListener::bind((Ipv4Addr::LOCALHOST, port))?;
    l.set_nonblocking(true)?;
    Ok(l)
}

/// Live loopback listeners for every agent of a world. A killed or
/// unreachable listener closes its socket; restoring it binds again.
pub struct Agents {
    world: SharedWorld,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl Agents {
    pub fn spawn(world: SharedWorld) -> Result<Self, SimError> {
        let ports = world.read().expect("world lock").ports();
        let mut bound = Vec::new();
        for (port, _, open) in &ports {
            let l = match bind(*port) {
                Ok(l) => l,
                Err(e) if e.kind() == ErrorKind::AddrInUse => return Err(SimError::PortInUse(*port)),
                Err(e) => return Err(e.into()),
            };
            bound.push((*port, open.then_some(l)));
        }
        let stop = Arc::new(AtomicBool::new(false));
        let threads = bound
            .into_iter()
            .map(|(port, listener)| {
                let world = world.clone();
                let stop = stop.clone();
                thread::Builder::new()
                    .name(format!("agent-{port}"))
                    .spawn(move || serve(port, listener, &world, &stop))
                    .expect("spawn agent thread")
            })
            .collect();
        Ok(Agents { world, stop, threads })
    }

    pub fn world(&self) -> &SharedWorld {
        &self.world
    }

    pub fn apply(&self, action: &Action) -> Result<(), SimError> {
        self.world.write().expect("world lock").apply(action)
    }

    pub fn shutdown(mut self) {
        self.stop_all();
    }

    fn stop_all(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for Agents {
    fn drop(&mut self) {
        self.stop_all();
    }
}

fn serve(port: u16, mut listener: Option<TcpListener>, world: &SharedWorld, stop: &AtomicBool) {
    while !stop.load(Ordering::SeqCst) {
        let open = world.read().map(|w| w.port_open(port)).unwrap_or(false);
        match (&listener, open) {
            (None, true) => match bind(port) {
                Ok(l) => listener = Some(l),
                Err(e) => log::debug!("rebinding {port}: {e}"),
            },
            (Some(_), false) => listener = None,
            _ => {}
        }
        let Some(l) = &listener else {
            thread::sleep(POLL);
            continue;
        };
        match l.accept() {
            Ok((stream, _)) => respond(port, stream, world),
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(e) => {
                log::warn!("accept on {port}: {e}");
                thread::sleep(POLL);
            }
        }
    }
}

fn respond(port: u16, mut stream: TcpStream, world: &SharedWorld) {
    let (latency, doc) = {
        let Ok(w) = world.read() else { return };
        let host = w.ports().into_iter().find(|(p, _, _)| *p == port).map(|(_, h, _)| h);
        (host.map(|h| w.latency(&h)).unwrap_or_default(), w.document(port).unwrap_or_default())
    };
    let _ = stream.set_nonblocking(false);
    thread::sleep(latency);
    let _ = stream.write_all(doc.as_bytes());
}

/// A base port such that the next `count` ports are currently free on loopback.
pub fn pick_base_port(count: usize) -> Option<u16> {
    let mut rng = rand::thread_rng();
    for _ in 0..64 {
        let base: u16 = rng.gen_range(20_000..(60_000 - count as u16));
        let held: Result<Vec<_>, _> = (1..=count as u16).map(|i| bind(base + i)).collect();
        if held.is_ok() {
            return Some(base);
        }
    }
    None
}
