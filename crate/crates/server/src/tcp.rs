use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use mirrorboard_core::wire::{decode_flake, FrameBuffer};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, watch};

use crate::router_task::{Cmd, ConnId, WRITER_DEPTH};

pub(crate) static NEXT_CONN: AtomicU64 = AtomicU64::new(1);

pub(crate) async fn accept_loop(listener: TcpListener, cmds: mpsc::Sender<Cmd>, mut stop: watch::Receiver<bool>) {
    loop {
        tokio::select! {
            _ = stop.changed() => break,
            accepted = listener.accept() => match accepted {
                Ok((stream, peer)) => {
                    tracing::debug!(%peer, "tcp connection");
                    let _ = stream.set_nodelay(true);
                    tokio::spawn(serve(stream, cmds.clone(), stop.clone()));
                }
                Err(e) => tracing::warn!(error = %e, "accept failed"),
            },
        }
    }
}

async fn serve(stream: TcpStream, cmds: mpsc::Sender<Cmd>, mut stop: watch::Receiver<bool>) {
    let conn: ConnId = NEXT_CONN.fetch_add(1, Ordering::Relaxed);
    let (mut rd, mut wr) = stream.into_split();
    let (tx, mut rx) = mpsc::channel::<Arc<[u8]>>(WRITER_DEPTH);
    if cmds.send(Cmd::Open { conn, tx }).await.is_err() {
        return;
    }
    let writer = tokio::spawn(async move {
        while let Some(p) = rx.recv().await {
            if wr.write_all(&p).await.is_err() {
                break;
            }
        }
        let _ = wr.shutdown().await;
    });

    let mut frames = FrameBuffer::new();
    let mut buf = vec![0u8; 64 * 1024];
    'read: loop {
        let n = tokio::select! {
            _ = stop.changed() => break,
            r = rd.read(&mut buf) => match r {
                Ok(0) | Err(_) => break,
                Ok(n) => n,
            },
        };
        let packets = match frames.push(&buf[..n]) {
            Ok(p) => p,
            Err(e) => {
                // A broken frame header leaves no way to resynchronize.
                let _ = cmds
                    .send(Cmd::Garbage {
                        conn,
                        message: e.to_string(),
                    })
                    .await;
                break;
            }
        };
        for p in packets {
            let cmd = match decode_flake(&p) {
                Ok(flake) => Cmd::Packet { conn, flake },
                Err(e) => Cmd::Garbage {
                    conn,
                    message: e.to_string(),
                },
            };
            if cmds.send(cmd).await.is_err() {
                break 'read;
            }
        }
    }
    let _ = cmds.send(Cmd::Close { conn }).await;
    let _ = writer.await;
}
