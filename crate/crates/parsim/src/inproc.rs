//! In-process transport: one unbounded queue per logical process.

use std::time::Duration;

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender, TryRecvError};
use parsim_core::lp::LpId;
use parsim_core::transport::Transport;
use parsim_core::{Error, Result};

type Packet = (LpId, Vec<u8>);

pub struct InprocTransport {
    lp: LpId,
    peers: Vec<Sender<Packet>>,
    rx: Receiver<Packet>,
    watchdog: Duration,
}

/// Fully connected transports for `n` logical processes. A blocking
/// receive that waits longer than `watchdog` fails with
/// [`Error::Watchdog`].
pub fn inproc_mesh(n: usize, watchdog: Duration) -> Vec<InprocTransport> {
    let (txs, rxs): (Vec<_>, Vec<_>) = (0..n).map(|_| unbounded()).unzip();
    rxs.into_iter()
        .enumerate()
        .map(|(i, rx)| InprocTransport {
            lp: LpId(i as u32),
            peers: txs.clone(),
            rx,
            watchdog,
        })
        .collect()
}

impl Transport for InprocTransport {
    fn local_lp(&self) -> LpId {
        self.lp
    }

    fn lp_count(&self) -> usize {
        self.peers.len()
    }

    fn send(&mut self, to: LpId, bytes: Vec<u8>) -> Result<()> {
        let tx = self
            .peers
            .get(to.index())
            .ok_or_else(|| Error::Transport(format!("no LP {}", to.0)))?;
        tx.send((self.lp, bytes))
            .map_err(|_| Error::Transport(format!("LP {} is gone", to.0)))
    }

    fn recv(&mut self) -> Result<(LpId, Vec<u8>)> {
        self.rx.recv_timeout(self.watchdog).map_err(|e| match e {
            RecvTimeoutError::Timeout => {
                Error::Watchdog(format!("LP {} received nothing for {:?}", self.lp.0, self.watchdog))
            }
            RecvTimeoutError::Disconnected => Error::Transport("every peer is gone".into()),
        })
    }

    fn try_recv(&mut self) -> Result<Option<(LpId, Vec<u8>)>> {
        match self.rx.try_recv() {
            Ok(p) => Ok(Some(p)),
            Err(TryRecvError::Empty) => Ok(None),
            Err(TryRecvError::Disconnected) => Err(Error::Transport("every peer is gone".into())),
        }
    }
}
